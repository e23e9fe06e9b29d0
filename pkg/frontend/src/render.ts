/**
 * ECharts option construction and server-side SVG rendering.
 *
 * One row of panels with a shared y-range; per algorithm a mean line plus a
 * +/- std band (two silent stacked series).  Mean series carry the CSV
 * values untouched.
 */

import * as echarts from "echarts";
import type { PanelData } from "./data.js";

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#ff7f0e",
  "#9467bd",
  "#8c564b",
  "#e377c2",
  "#7f7f7f",
];

function algoOrder(panels: PanelData[]): string[] {
  const order: string[] = [];
  for (const panel of panels) {
    for (const algo of panel.algos.keys()) {
      if (!order.includes(algo)) {
        order.push(algo);
      }
    }
  }
  return order;
}

function sharedRange(panels: PanelData[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const panel of panels) {
    for (const series of panel.algos.values()) {
      for (let i = 0; i < series.mean.length; i++) {
        lo = Math.min(lo, series.mean[i] - series.std[i]);
        hi = Math.max(hi, series.mean[i] + series.std[i]);
      }
    }
  }
  const pad = hi > lo ? 0.05 * (hi - lo) : Math.max(0.05 * Math.abs(hi), 0.05);
  return [lo - pad, hi + pad];
}

export function buildOption(
  panels: PanelData[],
  labels: string[],
  metric: string,
  epsilon: number | null,
): echarts.EChartsOption {
  const algos = algoOrder(panels);
  const [yLo, yHi] = sharedRange(panels);
  const n = panels.length;
  const gap = 4;
  const left = 6;
  const width = (100 - left - 2 - gap * (n - 1)) / n;

  const grids: object[] = [];
  const xAxes: object[] = [];
  const yAxes: object[] = [];
  const series: object[] = [];
  const titles: object[] = [
    {
      text: epsilon === null ? metric : `${metric}  (eps = ${epsilon.toFixed(2)})`,
      left: "center",
      top: 2,
    },
  ];

  panels.forEach((panel, p) => {
    const gridLeft = left + p * (width + gap);
    grids.push({ left: `${gridLeft}%`, width: `${width}%`, top: 60, bottom: 48 });
    titles.push({
      text: labels[p] ?? `panel ${p + 1}`,
      textStyle: { fontSize: 12, fontWeight: "normal" },
      left: `${gridLeft + width / 2}%`,
      top: 34,
      textAlign: "center",
    });
    xAxes.push({ type: "value", gridIndex: p, name: "round", nameLocation: "middle", nameGap: 24 });
    yAxes.push({
      type: "value",
      gridIndex: p,
      min: yLo,
      max: yHi,
      axisLabel: { show: p === 0 },
      name: p === 0 ? metric : "",
    });
    for (const [a, algo] of algos.entries()) {
      const stats = panel.algos.get(algo);
      if (stats === undefined) {
        continue;
      }
      const color = PALETTE[a % PALETTE.length];
      const stack = `band-${p}-${algo}`;
      series.push({
        name: `${algo} band floor`,
        type: "line",
        xAxisIndex: p,
        yAxisIndex: p,
        data: stats.rounds.map((r, i) => [r, stats.mean[i] - stats.std[i]]),
        stack,
        symbol: "none",
        lineStyle: { opacity: 0 },
        silent: true,
        tooltip: { show: false },
      });
      series.push({
        name: `${algo} band`,
        type: "line",
        xAxisIndex: p,
        yAxisIndex: p,
        data: stats.rounds.map((r, i) => [r, 2 * stats.std[i]]),
        stack,
        symbol: "none",
        lineStyle: { opacity: 0 },
        areaStyle: { color, opacity: 0.15 },
        silent: true,
        tooltip: { show: false },
      });
      series.push({
        name: algo,
        type: "line",
        xAxisIndex: p,
        yAxisIndex: p,
        data: stats.rounds.map((r, i) => [r, stats.mean[i]]),
        symbol: "none",
        lineStyle: { color, width: 1.5 },
        itemStyle: { color },
      });
    }
  });

  return {
    animation: false,
    title: titles,
    legend: { data: algos, bottom: 0 },
    grid: grids,
    xAxis: xAxes as echarts.EChartsOption["xAxis"],
    yAxis: yAxes as echarts.EChartsOption["yAxis"],
    series: series as echarts.EChartsOption["series"],
  };
}

export function renderSvg(option: echarts.EChartsOption, width: number, height: number): string {
  const chart = echarts.init(null, null, { renderer: "svg", ssr: true, width, height });
  try {
    chart.setOption(option);
    return chart.renderToSVGString();
  } finally {
    chart.dispose();
  }
}

/** Mean-series values per (panel, algo), for verifying no resampling. */
export function meanSeriesValues(option: echarts.EChartsOption): Map<string, number[]> {
  const out = new Map<string, number[]>();
  const series = option.series as Array<{ name: string; xAxisIndex: number; data: [number, number][] }>;
  for (const s of series) {
    if (s.name.endsWith(" band") || s.name.endsWith(" band floor")) {
      continue;
    }
    out.set(`${s.xAxisIndex}:${s.name}`, s.data.map((d) => d[1]));
  }
  return out;
}
