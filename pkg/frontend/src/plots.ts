/**
 * CLI: render publication-style panels from aggregate CSVs.
 *
 *   node dist/plots.js --metric train_loss \
 *     --csv a.csv b.csv c.csv --report privacy_report.json \
 *     --out fig.svg [--labels "(0,0)" "(1,1)" "(5,5)"] [--width 1500]
 *
 * One panel per CSV (shared y-axis), one curve per algorithm with a +/- std
 * band, epsilon from the report in the title.  Exits nonzero on missing
 * files or columns.
 */

import { writeFileSync } from "node:fs";
import { loadEpsilon, loadPanel } from "./data.js";
import { buildOption, renderSvg } from "./render.js";

export interface PlotArgs {
  metric: string;
  csv: string[];
  labels: string[];
  report: string | null;
  out: string;
  width: number;
  height: number;
}

export function parseArgs(argv: string[]): PlotArgs {
  const args: PlotArgs = {
    metric: "",
    csv: [],
    labels: [],
    report: null,
    out: "",
    width: 1500,
    height: 460,
  };
  const multi: Record<string, string[]> = { "--csv": args.csv, "--labels": args.labels };
  let i = 0;
  while (i < argv.length) {
    const flag = argv[i];
    if (flag === "--metric" || flag === "--report" || flag === "--out" || flag === "--width" || flag === "--height") {
      const value = argv[++i];
      if (value === undefined) {
        throw new Error(`missing value for ${flag}`);
      }
      if (flag === "--metric") args.metric = value;
      else if (flag === "--report") args.report = value;
      else if (flag === "--out") args.out = value;
      else if (flag === "--width") args.width = Number(value);
      else args.height = Number(value);
      i++;
    } else if (flag in multi) {
      i++;
      while (i < argv.length && !argv[i].startsWith("--")) {
        multi[flag].push(argv[i]);
        i++;
      }
    } else {
      throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!args.metric) throw new Error("--metric is required");
  if (args.csv.length === 0) throw new Error("--csv requires at least one file");
  if (!args.out) throw new Error("--out is required");
  return args;
}

export function run(args: PlotArgs): void {
  const panels = args.csv.map((path) => loadPanel(path, args.metric));
  const epsilon = args.report === null ? null : loadEpsilon(args.report);
  const option = buildOption(panels, args.labels, args.metric, epsilon);
  const svg = renderSvg(option, args.width, args.height);
  writeFileSync(args.out, svg, "utf-8");
}

export function main(argv: string[]): number {
  try {
    run(parseArgs(argv));
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}
