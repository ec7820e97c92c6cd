import init, { intervals, region, sweep } from "./pkg/glmdebias_wasm.js";

const COLORS = { "REF-DS": "#1b6ca8", "ORIG-DS": "#d9822b", "MLE": "#6a9f3a" };
const status = document.getElementById("status");
const num = (id) => Number(document.getElementById(id).value);

function scenario() {
  return { n: num("n"), p: num("p"), rho: num("rho"), beta1: num("beta1"), seed: num("seed") };
}

function legend(id, methods) {
  document.getElementById(id).innerHTML = methods
    .map((m) => `<span><i class="sw" style="background:${COLORS[m] || "#555"}"></i>${m}</span>`)
    .join("");
}

// linear map from data range to pixel range
function scale(lo, hi, a, b) {
  return (v) => a + ((v - lo) / (hi - lo)) * (b - a);
}

function axes(ctx, w, h, pad) {
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function run(label, f) {
  status.textContent = `${label}...`;
  // let the status paint before the blocking call
  setTimeout(() => {
    try {
      f();
      status.textContent = "";
    } catch (e) {
      status.textContent = String(e);
    }
  }, 20);
}

function drawIntervals() {
  const out = JSON.parse(intervals(JSON.stringify(scenario())));
  const cv = document.getElementById("intervals");
  const ctx = cv.getContext("2d");
  const { width: w, height: h } = cv;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const all = out.coefs.flatMap((c) => c.intervals.flatMap((i) => [i.lower, i.upper]).concat([c.truth]));
  const y = scale(Math.min(...all) - 0.1, Math.max(...all) + 0.1, h - pad, pad);
  axes(ctx, w, h, pad);
  const slot = (w - 2 * pad) / out.coefs.length;
  const methods = [...new Set(out.coefs.flatMap((c) => c.intervals.map((i) => i.method)))];
  out.coefs.forEach((c, k) => {
    const x0 = pad + k * slot;
    ctx.fillStyle = "#222";
    ctx.fillText(c.name, x0 + slot / 2 - 8, h - pad + 16);
    ctx.strokeStyle = "#c00";
    ctx.setLineDash([4, 3]);
    ctx.beginPath();
    ctx.moveTo(x0 + 8, y(c.truth));
    ctx.lineTo(x0 + slot - 8, y(c.truth));
    ctx.stroke();
    ctx.setLineDash([]);
    c.intervals.forEach((iv) => {
      const x = x0 + ((methods.indexOf(iv.method) + 1) * slot) / (methods.length + 1);
      ctx.strokeStyle = ctx.fillStyle = COLORS[iv.method] || "#555";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(x, y(iv.lower));
      ctx.lineTo(x, y(iv.upper));
      ctx.stroke();
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.arc(x, y(iv.estimate), 3, 0, 2 * Math.PI);
      ctx.fill();
    });
  });
  ctx.fillStyle = "#222";
  ctx.fillText(`lambda (CV) = ${out.lambda.toPrecision(3)}; dashed red = truth`, pad + 4, pad - 10);
  legend("legend1", methods);
}

function drawRegion() {
  const out = JSON.parse(region(JSON.stringify(scenario())));
  const cv = document.getElementById("region");
  const ctx = cv.getContext("2d");
  const { width: w, height: h } = cv;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const pts = out.ellipses.flatMap((e) => e.boundary).concat([out.truth]);
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]);
  const sx = scale(Math.min(...xs) - 0.05, Math.max(...xs) + 0.05, pad, w - pad);
  const sy = scale(Math.min(...ys) - 0.05, Math.max(...ys) + 0.05, h - pad, pad);
  axes(ctx, w, h, pad);
  ctx.fillStyle = "#222";
  ctx.fillText("beta1", w - pad - 30, h - pad + 18);
  ctx.fillText("beta2", 4, pad - 8);
  out.ellipses.forEach((e) => {
    ctx.strokeStyle = COLORS[e.method] || "#555";
    ctx.lineWidth = 2;
    ctx.beginPath();
    e.boundary.forEach((p, i) => (i ? ctx.lineTo(sx(p[0]), sy(p[1])) : ctx.moveTo(sx(p[0]), sy(p[1]))));
    ctx.stroke();
    ctx.fillStyle = ctx.strokeStyle;
    ctx.fillRect(sx(e.center[0]) - 2, sy(e.center[1]) - 2, 4, 4);
  });
  ctx.fillStyle = "#c00";
  ctx.beginPath();
  ctx.arc(sx(out.truth[0]), sy(out.truth[1]), 4, 0, 2 * Math.PI);
  ctx.fill();
  legend("legend2", out.ellipses.map((e) => e.method));
  const covered = out.ellipses.map((e) => `${e.method}: ${e.covers_truth ? "covers" : "misses"} the truth`).join("; ");
  document.getElementById("legend2").insertAdjacentText("beforeend", ` (${covered}; red dot = truth)`);
}

function drawSweep() {
  const s = scenario();
  const input = { n: s.n, p: s.p, rho: s.rho, seed: s.seed, n_replicates: num("reps"), beta1_grid: [0, 0.5, 1.0, 1.5] };
  const rows = JSON.parse(sweep(JSON.stringify(input)));
  const cv = document.getElementById("sweep");
  const ctx = cv.getContext("2d");
  const { width: w, height: h } = cv;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const x = scale(-0.1, 1.6, pad, w - pad);
  const y = scale(0.5, 1.0, h - pad, pad);
  axes(ctx, w, h, pad);
  ctx.strokeStyle = "#bbb";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.moveTo(pad, y(0.95));
  ctx.lineTo(w - pad, y(0.95));
  ctx.stroke();
  ctx.setLineDash([]);
  ctx.fillStyle = "#222";
  [0.5, 0.75, 0.95, 1.0].forEach((v) => ctx.fillText(v.toFixed(2), 4, y(v) + 4));
  input.beta1_grid.forEach((b) => ctx.fillText(b.toFixed(1), x(b) - 8, h - pad + 16));
  const methods = [...new Set(rows.map((r) => r.method))];
  methods.forEach((m) => {
    const pts = rows.filter((r) => r.method === m && r.coverage !== null);
    ctx.strokeStyle = ctx.fillStyle = COLORS[m] || "#555";
    ctx.lineWidth = 2;
    ctx.beginPath();
    pts.forEach((r, i) => {
      const px = x(r.beta1);
      const py = y(Math.max(0.5, r.coverage));
      i ? ctx.lineTo(px, py) : ctx.moveTo(px, py);
    });
    ctx.stroke();
    pts.forEach((r) => ctx.fillRect(x(r.beta1) - 3, y(Math.max(0.5, r.coverage)) - 3, 6, 6));
  });
  legend("legend3", methods);
}

await init();
document.getElementById("run-intervals").onclick = () => run("fitting", drawIntervals);
document.getElementById("run-region").onclick = () => run("fitting", drawRegion);
document.getElementById("run-sweep").onclick = () => run("simulating", drawSweep);
run("fitting", drawIntervals);
