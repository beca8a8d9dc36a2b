/** Pure projections from a snapshot to chart series, and series to SVG
 * polyline points. No smoothing, no derived statistics: the y values are
 * the snapshot's numbers verbatim. */

import type { Snapshot } from "./api.js";

export interface Series {
  label: string;
  x: number[];
  y: number[];
}

export function psiSeries(snap: Snapshot): Series {
  return { label: "psi", x: [...snap.trace_sample_sizes], y: [...snap.psi_trace] };
}

export function betaSeries(snap: Snapshot): Series[] {
  const q = snap.beta_trace.length > 0 ? snap.beta_trace[0].length : 0;
  const out: Series[] = [];
  for (let j = 0; j < q; j++) {
    out.push({
      label: `beta[${j}]`,
      x: [...snap.trace_sample_sizes],
      y: snap.beta_trace.map((row) => row[j]),
    });
  }
  return out;
}

/** Map a series onto a width x height viewBox, 4px padding. Empty and
 * single-point series produce an empty points string (nothing to draw). */
export function polylinePoints(s: Series, width: number, height: number): string {
  if (s.x.length < 2) return "";
  const pad = 4;
  const xMin = Math.min(...s.x);
  const xMax = Math.max(...s.x);
  const yMin = Math.min(...s.y);
  const yMax = Math.max(...s.y);
  const xSpan = xMax - xMin || 1;
  const ySpan = yMax - yMin || 1;
  return s.x
    .map((x, i) => {
      const px = pad + ((x - xMin) / xSpan) * (width - 2 * pad);
      const py = height - pad - ((s.y[i] - yMin) / ySpan) * (height - 2 * pad);
      return `${px.toFixed(2)},${py.toFixed(2)}`;
    })
    .join(" ");
}

export function renderChart(
  doc: Document,
  series: Series[],
  width = 320,
  height = 120,
): SVGSVGElement {
  const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "trace-chart");
  for (const s of series) {
    const line = doc.createElementNS("http://www.w3.org/2000/svg", "polyline");
    line.setAttribute("fill", "none");
    line.setAttribute("data-label", s.label);
    line.setAttribute("data-points", String(s.x.length));
    line.setAttribute("points", polylinePoints(s, width, height));
    svg.appendChild(line);
  }
  return svg;
}
