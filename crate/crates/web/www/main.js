import init, { stein, tails, order } from "./pkg/milstein_mdp_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

// series: [{x, y, label, dots}], opts: {logx, logy, band: [lo, hi]}
function plot(canvas, series, opts = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, pad = 45;
  ctx.clearRect(0, 0, W, H);
  const tx = opts.logx ? Math.log10 : (v) => v;
  const ty = opts.logy ? Math.log10 : (v) => v;
  const pts = series.flatMap((s) => s.x.map((x, i) => [tx(x), ty(s.y[i])])).filter((p) => p.every(Number.isFinite));
  if (opts.band) opts.band.forEach((b) => pts.push([pts[0][0], b]));
  let [x0, x1] = [Math.min(...pts.map((p) => p[0])), Math.max(...pts.map((p) => p[0]))];
  let [y0, y1] = [Math.min(...pts.map((p) => p[1])), Math.max(...pts.map((p) => p[1]))];
  if (x1 === x0) x1 = x0 + 1;
  if (y1 === y0) y1 = y0 + 1;
  const px = (v) => pad + ((v - x0) / (x1 - x0)) * (W - 2 * pad);
  const py = (v) => H - pad - ((v - y0) / (y1 - y0)) * (H - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, W - 2 * pad, H - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.font = "11px sans-serif";
  const fmt = (v, log) => (log ? "1e" + v.toFixed(1) : v.toPrecision(3));
  ctx.fillText(fmt(x0, opts.logx), pad, H - pad + 14);
  ctx.fillText(fmt(x1, opts.logx), W - pad - 30, H - pad + 14);
  ctx.fillText(fmt(y0, opts.logy), 2, H - pad);
  ctx.fillText(fmt(y1, opts.logy), 2, pad + 8);
  if (opts.band) {
    ctx.fillStyle = "rgba(0,160,0,0.08)";
    ctx.fillRect(pad, py(opts.band[1]), W - 2 * pad, py(opts.band[0]) - py(opts.band[1]));
  }
  series.forEach((s, k) => {
    const c = COLORS[k % COLORS.length];
    ctx.strokeStyle = ctx.fillStyle = c;
    ctx.beginPath();
    s.x.forEach((x, i) => {
      const X = px(tx(x)), Y = py(ty(s.y[i]));
      if (!Number.isFinite(Y)) return;
      i ? ctx.lineTo(X, Y) : ctx.moveTo(X, Y);
      if (s.dots) ctx.fillRect(X - 2, Y - 2, 4, 4);
    });
    ctx.stroke();
    ctx.fillText(s.label, W - pad - 110, pad + 14 + 13 * k);
  });
}

function wire(id, action) {
  const sec = document.getElementById(id);
  const out = sec.querySelector(".out");
  const val = (n) => sec.querySelector(`[name=${n}]`).value;
  sec.querySelector("button").addEventListener("click", () => {
    out.className = "out";
    out.textContent = "running...";
    // Let the status paint before the blocking call.
    setTimeout(() => {
      const t = performance.now();
      try {
        const msg = action(val, sec.querySelector("canvas"));
        out.textContent = `${msg}\n${((performance.now() - t) / 1000).toFixed(2)} s`;
      } catch (e) {
        out.className = "out err";
        out.textContent = String(e.message ?? e);
      }
    }, 10);
  });
}

await init();

wire("stein", (v, canvas) => {
  const r = JSON.parse(stein(v("model"), v("params"), v("h"), Number(v("intervals"))));
  const peak = Math.max(...r.density.y);
  const fpeak = Math.max(...r.f_prime.map(Math.abs)) || 1;
  plot(canvas, [
    { x: r.density.x, y: r.density.y.map((y) => y / peak), label: "density (scaled)" },
    { x: r.x, y: r.f_prime.map((y) => y / fpeak), label: "f' (scaled)" },
  ]);
  return `pi(h) = ${r.pi_h.toPrecision(8)}   asymptotic variance = ${r.asymptotic_variance.toPrecision(8)}   sup residual = ${r.residual_sup.toExponential(2)}`;
});

wire("tails", (v, canvas) => {
  const r = JSON.parse(tails(v("model"), v("params"), v("h"), Number(v("eta")), Number(v("replicas")), BigInt(v("seed"))));
  const labels = [...new Set(r.rows.map((row) => row.statistic))];
  plot(
    canvas,
    labels.map((l) => {
      const rows = r.rows.filter((row) => row.statistic === l);
      return { x: rows.map((row) => row.x), y: rows.map((row) => row.ratio), label: l, dots: true };
    }),
    { band: [0.85, 1.18] },
  );
  const lines = r.rows.map((row) => `${row.statistic.padEnd(3)} x=${row.x.toFixed(2)} ratio=${row.ratio.toFixed(3)} [${row.lo.toFixed(3)}, ${row.hi.toFixed(3)}]`);
  return `m = ${r.steps} steps, ${r.failures} failed replicas\n${lines.join("\n")}`;
});

wire("order", (v, canvas) => {
  const r = JSON.parse(order(v("model"), v("params"), Number(v("x0")), Number(v("paths")), BigInt(v("seed"))));
  plot(
    canvas,
    [
      { x: r.eta, y: r.error_em, label: `EM  slope ${r.slope_em.toFixed(2)}`, dots: true },
      { x: r.eta, y: r.error_milstein, label: `Milstein  slope ${r.slope_milstein.toFixed(2)}`, dots: true },
    ],
    { logx: true, logy: true },
  );
  return r.schemes_coincide ? "additive noise: the two schemes coincide" : `EM slope ${r.slope_em.toFixed(3)}, Milstein slope ${r.slope_milstein.toFixed(3)}`;
});
