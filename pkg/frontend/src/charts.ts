/** SVG builders for the case screen.
 *
 * Pure string functions of payload numbers: the same payload always
 * yields byte-identical markup, and nothing here recomputes, rescales,
 * or reinterprets an attribution. Colors, geometry, and ordering rules
 * are module constants so every screen of every session renders with
 * the same encoding.
 */

import { fmtPhi, fmtValue, esc } from "./format.js";
import type { AttributionBar, ScoreHistogram } from "./types.js";

export const MAX_BARS = 4;
export const BAR_POSITIVE = "#b0413e"; // pushes the score toward risk
export const BAR_NEGATIVE = "#3e66b0"; // pushes the score away from risk

const BAR_WIDTH = 440;
const BAR_ROW = 34;
const BAR_CENTER = BAR_WIDTH / 2;
const BAR_HALF_SPAN = 200;

/** Horizontal bar chart of the strongest attributions.
 *
 * Shows the top min(4, d) bars by absolute value, strongest first, on a
 * shared axis scaled to the largest shown magnitude. Ties keep the
 * payload's order (the sort is stable).
 */
export function attributionBarChart(bars: readonly AttributionBar[]): string {
  const shown = [...bars]
    .sort((a, b) => Math.abs(b.phi) - Math.abs(a.phi))
    .slice(0, MAX_BARS);
  const scale = Math.max(1e-12, ...shown.map((b) => Math.abs(b.phi)));
  const height = shown.length * BAR_ROW + 10;
  const parts: string[] = [];
  parts.push(
    `<svg class="attr-bars" viewBox="0 0 ${BAR_WIDTH} ${height}" ` +
      `width="${BAR_WIDTH}" height="${height}" role="img" aria-label="top attributions">`,
  );
  parts.push(
    `<line class="axis" x1="${BAR_CENTER}" y1="4" x2="${BAR_CENTER}" ` +
      `y2="${height - 4}" stroke="#999" stroke-width="1"/>`,
  );
  shown.forEach((bar, i) => {
    const y = 6 + i * BAR_ROW;
    const w = (Math.abs(bar.phi) / scale) * BAR_HALF_SPAN;
    const x = bar.phi < 0 ? BAR_CENTER - w : BAR_CENTER;
    const cls = bar.phi < 0 ? "bar bar-neg" : "bar bar-pos";
    const fill = bar.phi < 0 ? BAR_NEGATIVE : BAR_POSITIVE;
    parts.push(`<text class="bar-label" x="8" y="${y + 8}" font-size="12">${esc(bar.feature)}</text>`);
    parts.push(
      `<text class="bar-value" x="${BAR_WIDTH - 8}" y="${y + 8}" ` +
        `font-size="12" text-anchor="end">${fmtPhi(bar.phi)}</text>`,
    );
    parts.push(
      `<rect class="${cls}" data-feature="${esc(bar.feature)}" data-phi="${fmtPhi(bar.phi)}" ` +
        `x="${x.toFixed(1)}" y="${y + 12}" width="${w.toFixed(1)}" height="14" fill="${fill}"/>`,
    );
  });
  parts.push("</svg>");
  return parts.join("");
}

const HIST_WIDTH = 360;
const HIST_HEIGHT = 120;
const HIST_PLOT_H = 88;
const HIST_PAD = 10;

function histX(v: number): number {
  return HIST_PAD + v * (HIST_WIDTH - 2 * HIST_PAD);
}

/** Score distribution with the case's score and the decision threshold
 * marked. Bin geometry comes straight from the payload's precomputed
 * histogram. */
export function scoreDistributionChart(
  hist: ScoreHistogram,
  score: number,
  threshold: number,
): string {
  const maxCount = Math.max(1, ...hist.counts);
  const baseY = 8 + HIST_PLOT_H;
  const parts: string[] = [];
  parts.push(
    `<svg class="score-hist" viewBox="0 0 ${HIST_WIDTH} ${HIST_HEIGHT}" ` +
      `width="${HIST_WIDTH}" height="${HIST_HEIGHT}" role="img" aria-label="score distribution">`,
  );
  hist.counts.forEach((count, i) => {
    const x0 = histX(hist.bin_edges[i]);
    const x1 = histX(hist.bin_edges[i + 1]);
    const h = (count / maxCount) * HIST_PLOT_H;
    parts.push(
      `<rect class="bin" x="${(x0 + 0.5).toFixed(1)}" y="${(baseY - h).toFixed(1)}" ` +
        `width="${Math.max(0.5, x1 - x0 - 1).toFixed(1)}" height="${h.toFixed(1)}" fill="#c5cdd8"/>`,
    );
  });
  parts.push(
    `<line class="axis" x1="${HIST_PAD}" y1="${baseY}" x2="${HIST_WIDTH - HIST_PAD}" ` +
      `y2="${baseY}" stroke="#666" stroke-width="1"/>`,
  );
  for (const tick of [0, 0.5, 1]) {
    parts.push(
      `<text class="tick" x="${histX(tick).toFixed(1)}" y="${HIST_HEIGHT - 4}" ` +
        `font-size="10" text-anchor="middle">${tick}</text>`,
    );
  }
  parts.push(
    `<line class="marker-threshold" x1="${histX(threshold).toFixed(1)}" y1="6" ` +
      `x2="${histX(threshold).toFixed(1)}" y2="${baseY}" stroke="#888" ` +
      `stroke-width="1" stroke-dasharray="4 3"><title>decision threshold ${fmtValue(threshold)}</title></line>`,
  );
  parts.push(
    `<line class="marker-score" x1="${histX(score).toFixed(1)}" y1="2" ` +
      `x2="${histX(score).toFixed(1)}" y2="${baseY}" stroke="#b0413e" ` +
      `stroke-width="2"><title>this case</title></line>`,
  );
  parts.push("</svg>");
  return parts.join("");
}

const STRIP_WIDTH = 220;
const STRIP_HEIGHT = 26;

/** Min / quartile / max strip with the case's own value as a dot. */
export function quartileStrip(quartiles: readonly number[], value: number): string {
  const [lo, q1, med, q3, hi] = quartiles;
  const span = hi - lo;
  const x = (v: number): number =>
    span > 0 ? 10 + ((v - lo) / span) * (STRIP_WIDTH - 20) : STRIP_WIDTH / 2;
  const clamp = (px: number): number => Math.min(STRIP_WIDTH - 10, Math.max(10, px));
  const parts: string[] = [];
  parts.push(
    `<svg class="quartile-strip" viewBox="0 0 ${STRIP_WIDTH} ${STRIP_HEIGHT}" ` +
      `width="${STRIP_WIDTH}" height="${STRIP_HEIGHT}" role="img" aria-label="distribution">`,
  );
  parts.push(
    `<line class="track" x1="${x(lo).toFixed(1)}" y1="13" x2="${x(hi).toFixed(1)}" ` +
      `y2="13" stroke="#aaa" stroke-width="2"/>`,
  );
  parts.push(
    `<rect class="iqr" x="${x(q1).toFixed(1)}" y="6" ` +
      `width="${Math.max(1, x(q3) - x(q1)).toFixed(1)}" height="14" fill="#c5cdd8"/>`,
  );
  parts.push(
    `<line class="median" x1="${x(med).toFixed(1)}" y1="4" x2="${x(med).toFixed(1)}" ` +
      `y2="22" stroke="#666" stroke-width="2"/>`,
  );
  parts.push(
    `<circle class="value" cx="${clamp(x(value)).toFixed(1)}" cy="13" r="4" ` +
      `fill="#b0413e"><title>this case: ${fmtValue(value)}</title></circle>`,
  );
  parts.push("</svg>");
  return parts.join("");
}
