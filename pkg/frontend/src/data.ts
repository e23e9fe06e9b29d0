/**
 * Aggregate-CSV ingestion.
 *
 * The simulator's aggregate.csv holds one row per (algo, round) with
 * per-metric mean/std columns.  Plotting never recomputes statistics: the
 * series handed to the chart are exactly the parsed column values.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export interface SeriesStats {
  rounds: number[];
  mean: number[];
  std: number[];
}

/** One panel: per-algorithm series, in first-appearance order. */
export interface PanelData {
  algos: Map<string, SeriesStats>;
}

export function parseAggregateCsv(text: string): Record<string, string>[] {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    throw new Error(`CSV parse error: ${first.message} (row ${first.row})`);
  }
  return parsed.data;
}

export function extractMetric(rows: Record<string, string>[], metric: string): PanelData {
  const meanCol = `${metric}_mean`;
  const stdCol = `${metric}_std`;
  if (rows.length === 0) {
    throw new Error("aggregate CSV has no data rows");
  }
  for (const col of ["round", "algo", meanCol, stdCol]) {
    if (!(col in rows[0])) {
      throw new Error(`missing column '${col}' in aggregate CSV`);
    }
  }
  const algos = new Map<string, SeriesStats>();
  for (const row of rows) {
    let series = algos.get(row.algo);
    if (series === undefined) {
      series = { rounds: [], mean: [], std: [] };
      algos.set(row.algo, series);
    }
    series.rounds.push(Number(row.round));
    series.mean.push(Number(row[meanCol]));
    series.std.push(Number(row[stdCol]));
  }
  return { algos };
}

export function loadPanel(path: string, metric: string): PanelData {
  return extractMetric(parseAggregateCsv(readFileSync(path, "utf-8")), metric);
}

/** Epsilon toward a third party from a privacy report, null if non-private. */
export function loadEpsilon(reportPath: string): number | null {
  const report = JSON.parse(readFileSync(reportPath, "utf-8"));
  const eps = report.eps_third_party;
  return typeof eps === "number" ? eps : null;
}
