import init, { reservoirView, trainingView, stabilityView } from "./pkg/ternary_onn_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function drawGrid(canvas, side, cells, color) {
  const ctx = canvas.getContext("2d");
  const s = canvas.width / side;
  ctx.fillStyle = "#eee";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  cells.forEach((v, i) => {
    if (v === null) return;
    ctx.fillStyle = color(v);
    ctx.fillRect((i % side) * s, Math.floor(i / side) * s, Math.ceil(s), Math.ceil(s));
  });
}

function drawLines(canvas, series, logY) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const tf = (v) => (logY ? Math.log10(Math.max(v, 1e-12)) : v);
  const all = series.flatMap((s) => s.data.filter(Number.isFinite).map(tf));
  if (all.length === 0) return;
  let lo = Math.min(...all), hi = Math.max(...all);
  if (hi === lo) { hi += 1e-9; lo -= 1e-9; }
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.beginPath();
    s.data.forEach((v, i) => {
      const x = (i / Math.max(1, s.data.length - 1)) * (w - 10) + 5;
      const y = h - 5 - ((tf(v) - lo) / (hi - lo)) * (h - 10);
      i ? ctx.lineTo(x, y) : ctx.moveTo(x, y);
    });
    ctx.stroke();
  }
}

function guard(out, f) {
  try { f(); } catch (e) { $(out).textContent = String(e.message ?? e); }
}

function renderReservoir() {
  guard("rv-out", () => {
    const v = JSON.parse(reservoirView(num("rv-bits"), num("rv-value"), $("rv-laser").checked, num("rv-seed")));
    drawGrid($("rv-input"), v.input_side, v.input, (p) => (p ? "#000" : "#fff"));
    const max = Math.max(...v.intensity.filter((x) => x !== null));
    drawGrid($("rv-nodes"), v.grid_side, v.intensity, (x) => `hsl(30, 90%, ${10 + 80 * (x / max)}%)`);
    $("rv-out").textContent = `total node intensity ${v.total.toFixed(3)}`;
  });
}

function renderTraining() {
  $("tr-out").textContent = "training...";
  setTimeout(() => guard("tr-out", () => {
    const v = JSON.parse(trainingView(num("tr-bits"), num("tr-target"), num("tr-alpha"),
      $("tr-ternary").checked, num("tr-epochs"), num("tr-seed")));
    drawLines($("tr-curve"), [{ data: v.curve, color: "#c40" }], true);
    const colors = { "-1": "#36c", "0": "#fff", "1": "#c40" };
    drawGrid($("tr-mask"), v.grid_side, v.mask, (w) => colors[w]);
    $("tr-out").textContent =
      `final NMSE ${v.curve[v.curve.length - 1].toFixed(4)}  ` +
      `converged at epoch ${v.epochs_to_convergence}  test SER ${(100 * v.test_ser).toFixed(2)}%`;
  }), 0);
}

function renderStability() {
  $("st-out").textContent = "running...";
  setTimeout(() => guard("st-out", () => {
    const v = JSON.parse(stabilityView(num("st-checks"), num("st-drift"), num("st-noise"), num("st-seed")));
    drawLines($("st-curve"), [{ data: v.consistency, color: "#080" }], false);
    const sorted = [...v.consistency].sort((a, b) => a - b);
    $("st-out").textContent =
      `median consistency ${sorted[Math.floor(sorted.length / 2)].toFixed(4)}  ` +
      `gain range ${Math.min(...v.gain).toFixed(4)}..${Math.max(...v.gain).toFixed(4)}`;
  }), 0);
}

await init();
$("rv-run").onclick = renderReservoir;
$("rv-laser").onchange = renderReservoir;
$("tr-run").onclick = renderTraining;
$("st-run").onclick = renderStability;
renderReservoir();
