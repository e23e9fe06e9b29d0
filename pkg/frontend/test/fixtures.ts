/** Schema-conformant aggregate-CSV fixtures for the plot tests. */

export const AGGREGATE_HEADER = [
  "round",
  "algo",
  "metric_kind",
  "train_loss_mean",
  "train_loss_std",
  "accuracy_mean",
  "accuracy_std",
  "grad_dissim_mean",
  "grad_dissim_std",
  "grad_log_dissim_mean",
  "grad_log_dissim_std",
  "eps_so_far",
  "clip_C_mean",
  "clip_C_std",
];

export interface FixtureSpec {
  algos: string[];
  rounds: number;
  shift?: number;
}

/** Deterministic pseudo-curves; values carry many significant digits so the
 * exact-equality assertions are meaningful. */
export function makeAggregateCsv({ algos, rounds, shift = 0 }: FixtureSpec): string {
  const lines = [AGGREGATE_HEADER.join(",")];
  for (const [a, algo] of algos.entries()) {
    for (let t = 1; t <= rounds; t++) {
      const mean = Math.sin(0.37 * t + a + shift) / (1 + 0.1 * t) + 0.05 * a;
      const std = Math.abs(Math.cos(0.23 * t + a)) / 30;
      const acc = 0.1 + (0.8 * t) / (t + 10) - 0.03 * a;
      const row = [
        String(t),
        algo,
        "log10_gap",
        String(mean),
        String(std),
        String(acc),
        String(std / 2),
        String(Math.abs(mean) + 0.01),
        String(std / 3),
        String(mean / 7),
        String(std / 5),
        String(0.01 * t),
        "1.0",
        "0.0",
      ];
      lines.push(row.join(","));
    }
  }
  return lines.join("\r\n") + "\r\n";
}

export const REPORT_JSON = JSON.stringify({
  eps_third_party: 12.906331310546731,
  eps_server: 14.011355976528137,
  delta: 2.5e-6,
  delta_server: 2.5e-6,
  best_alpha: 2.0,
  path: "rdp",
  warm_rounds: 0,
});

export const NONPRIVATE_REPORT_JSON = JSON.stringify({
  eps_third_party: null,
  eps_server: null,
  delta: 2.5e-6,
  delta_server: 2.5e-6,
  best_alpha: null,
  path: "none",
  warm_rounds: 0,
});
