import init, { scalarDiagram, partition, curve } from "./pkg/cheaptalk_demo.js";

const PALETTE = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#86bcb6", "#d37295"];

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function report(id, text, isError = false) {
  const el = $(id);
  el.textContent = text;
  el.className = isError ? "error" : "note";
}

function guarded(outId, fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      report(outId, String(e.message ?? e), true);
    }
  };
}

// Maps data coordinates onto a canvas with a small margin.
function frame(canvas, xlo, xhi, ylo, yhi) {
  const pad = 24;
  const w = canvas.width - 2 * pad;
  const h = canvas.height - 2 * pad;
  return {
    x: (v) => pad + ((v - xlo) / (xhi - xlo)) * w,
    y: (v) => pad + h - ((v - ylo) / (yhi - ylo)) * h,
  };
}

function polyline(ctx, pts, map, color) {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(map.x(x), map.y(y)) : ctx.moveTo(map.x(x), map.y(y))));
  ctx.stroke();
}

function drawScalar() {
  const r = JSON.parse(scalarDiagram($("s-family").value, num("s-beta"), num("s-k")));
  const canvas = $("s-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const [lo, hi] = r.support;
  const top = Math.max(...r.density.map((p) => p[1])) * 1.15;
  const map = frame(canvas, lo, hi, 0, top);
  const edges = [lo, ...r.boundaries.map((l) => Math.min(Math.max(l, lo), hi)), hi];
  r.actions.forEach((_, i) => {
    ctx.fillStyle = PALETTE[i % PALETTE.length] + "33";
    ctx.fillRect(map.x(edges[i]), map.y(top), map.x(edges[i + 1]) - map.x(edges[i]), map.y(0) - map.y(top));
  });
  polyline(ctx, r.density, map, "#333");
  r.actions.forEach((u, i) => {
    ctx.fillStyle = PALETTE[i % PALETTE.length];
    ctx.beginPath();
    ctx.arc(map.x(u), map.y(0), 5, 0, 2 * Math.PI);
    ctx.fill();
  });
  const fmt = (v) => v.toFixed(4);
  report("s-out", `boundaries ${r.boundaries.map(fmt).join(", ") || "none"}; actions ${r.actions.map(fmt).join(", ")}`);
}

function drawPartition() {
  const r = JSON.parse(partition($("p-family").value, num("p-b1"), num("p-b2"), num("p-k"), num("p-seed")));
  const canvas = $("p-canvas");
  const ctx = canvas.getContext("2d");
  const cell = canvas.width / r.cells;
  r.assignment.forEach((a, idx) => {
    ctx.fillStyle = PALETTE[a % PALETTE.length];
    ctx.fillRect((idx % r.cells) * cell, Math.floor(idx / r.cells) * cell, cell + 0.5, cell + 0.5);
  });
  const [lo, hi] = r.box;
  const px = (v) => ((v - lo) / (hi - lo)) * canvas.width;
  ctx.fillStyle = "#000";
  for (const [u1, u2] of r.actions) {
    ctx.beginPath();
    ctx.arc(px(u1), canvas.height - px(u2), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  report("p-out", `${r.actions.length} actions, ${r.status} after ${r.iterations} iterations`);
}

function drawCurve() {
  const b1 = num("c-b1");
  const b2 = num("c-b2");
  const r = JSON.parse(curve($("c-family").value, b1, b2));
  const canvas = $("c-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const lo = r.grid[0];
  const hi = r.grid[r.grid.length - 1];
  const span = Math.max(1, ...r.values.map(Math.abs)) * 1.1;
  const map = frame(canvas, lo, hi, -span, span);
  polyline(ctx, [[lo, 0], [hi, 0]], map, "#bbb");
  polyline(ctx, r.grid.map((t, i) => [t, r.values[i]]), map, "#e15759");
  const v = r.verdict;
  report("c-out", `linear equilibrium: ${v.exists} (${v.case}, ${v.confidence}); red curve is E[X₂|X₁=t] − E[X₂]`);
}

await init();
$("s-run").addEventListener("click", guarded("s-out", drawScalar));
$("p-run").addEventListener("click", guarded("p-out", drawPartition));
$("c-run").addEventListener("click", guarded("c-out", drawCurve));
guarded("s-out", drawScalar)();
guarded("c-out", drawCurve)();
