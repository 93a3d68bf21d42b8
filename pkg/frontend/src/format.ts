/** Deterministic text formatting shared by screens and charts. One rule
 * per quantity so the same number always renders the same way. */

export function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function fmtScore(x: number): string {
  return x.toFixed(3);
}

export function fmtPercentile(p: number): string {
  return p.toFixed(1);
}

/** Signed attribution label, e.g. "+0.0420" / "-0.1100". */
export function fmtPhi(x: number): string {
  const body = Math.abs(x).toFixed(4);
  return (x < 0 ? "-" : "+") + body;
}

export function fmtPercent(frac: number): string {
  return (100 * frac).toFixed(1) + "%";
}

/** Feature / quartile values: integers stay bare, fractions keep two
 * decimals. */
export function fmtValue(x: number | string): string {
  if (typeof x === "string") return x;
  if (Number.isInteger(x)) return String(x);
  return x.toFixed(2);
}
