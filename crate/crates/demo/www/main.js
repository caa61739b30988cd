import init, { basis, sparsity, check, builtin_problem } from "./pkg/colloc_ad_demo.js";

const $ = (id) => document.getElementById(id);
// non-finite errors arrive as null
const sci = (v) => (v === null ? "NaN" : v.toExponential(2));

function guard(out, f) {
  try {
    out.classList.remove("error");
    f();
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e);
  }
}

function drawBasis(b) {
  const c = $("basis-canvas"), g = c.getContext("2d");
  const w = c.width, h = c.height, pad = 20;
  const x = (s) => pad + s * (w - 2 * pad);
  const wmax = Math.max(...b.weights);
  g.clearRect(0, 0, w, h);
  g.strokeStyle = "#999";
  g.beginPath(); g.moveTo(x(0), h - pad); g.lineTo(x(1), h - pad); g.stroke();
  g.fillStyle = "#3465a4";
  b.points.forEach((p, i) => {
    const bar = (b.weights[i] / wmax) * (h - 2 * pad);
    g.fillRect(x(p) - 2, h - pad - bar, 4, bar);
  });
  g.fillStyle = "#c00";
  b.support.forEach((p) => { g.beginPath(); g.arc(x(p), h - pad, 3, 0, 2 * Math.PI); g.fill(); });
}

function runBasis() {
  guard($("basis-out"), () => {
    const b = JSON.parse(basis($("degrees").value, $("boundaries").value));
    drawBasis(b);
    $("basis-out").textContent =
      `N = ${b.points.length}, sum W = ${b.weights.reduce((a, v) => a + v, 0)}`;
  });
}

function spy(g, m, x0, y0, size, rows, cols, color) {
  const cell = size / Math.max(rows, cols);
  g.strokeStyle = "#ccc";
  g.strokeRect(x0, y0, cols * cell, rows * cell);
  g.fillStyle = color;
  m.rows.forEach((r, i) => g.fillRect(x0 + m.cols[i] * cell, y0 + r * cell, Math.max(cell, 1), Math.max(cell, 1)));
}

const problemText = () => $("problem").value;
const mesh = () => [Number($("segments").value), Number($("degree").value)];

function runSparsity() {
  guard($("sparsity-out"), () => {
    const s = JSON.parse(sparsity(problemText(), ...mesh()));
    const c = $("sparsity-canvas"), g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    spy(g, s.jacobian, 10, 10, 380, s.n_constraints, s.n_z, "#3465a4");
    spy(g, s.hessian, 410, 10, 380, s.n_z, s.n_z, "#a40000");
    $("sparsity-out").textContent =
      `n_z = ${s.n_z}, constraints = ${s.n_constraints}, ` +
      `nnz(J) = ${s.jacobian.rows.length}, nnz(H lower) = ${s.hessian.rows.length}`;
  });
}

function runCheck() {
  const out = $("check-out");
  guard(out, () => {
    const r = JSON.parse(check(problemText(), ...mesh(), Number($("seed").value)));
    const rows = r.lines.map((l) => {
      const cls = l.report.pass ? "pass" : "fail";
      return `<tr><td>${l.quantity}</td><td>${l.reference}</td>` +
        `<td>${sci(l.report.max_abs)}</td><td>${sci(l.report.max_rel)}</td>` +
        `<td class="${cls}">${l.report.pass ? "PASS" : "FAIL"}</td></tr>`;
    });
    out.innerHTML = `<table><tr><th>quantity</th><th>vs</th><th>max abs</th><th>max rel</th><th></th></tr>` +
      rows.join("") + `</table>`;
  });
}

await init();
const load = () => { $("problem").value = builtin_problem($("builtin").value); };
$("builtin").addEventListener("change", load);
$("basis-run").addEventListener("click", runBasis);
$("sparsity-run").addEventListener("click", runSparsity);
$("check-run").addEventListener("click", runCheck);
load();
runBasis();
