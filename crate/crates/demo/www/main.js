import init, { trajectory, filterCurves, scan, version } from "./pkg/boris_demo.js";

const COLORS = { boris: "#888", "exp-a": "#d62728", "imp-a": "#1f77b4", "twop-a": "#2ca02c" };
const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#444"];

// Draws line or point series on a canvas. Points with null or non-finite
// coordinates break lines.
function plot(canvas, series, opts = {}) {
  const dpr = window.devicePixelRatio || 1;
  const w = canvas.clientWidth, h = canvas.clientHeight;
  canvas.width = w * dpr;
  canvas.height = h * dpr;
  const ctx = canvas.getContext("2d");
  ctx.scale(dpr, dpr);
  ctx.clearRect(0, 0, w, h);

  const tx = opts.logx ? Math.log10 : (v) => v;
  const ty = opts.logy ? Math.log10 : (v) => v;
  const ok = (v) => v !== null && Number.isFinite(v) && (!opts.logy || v > 0);
  let [x0, x1, y0, y1] = [Infinity, -Infinity, Infinity, -Infinity];
  for (const s of series) {
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!ok(y) || !Number.isFinite(x)) return;
      x0 = Math.min(x0, tx(x)); x1 = Math.max(x1, tx(x));
      y0 = Math.min(y0, ty(y)); y1 = Math.max(y1, ty(y));
    });
  }
  if (opts.yrange) [y0, y1] = opts.yrange;
  if (opts.equal) {
    const span = Math.max(x1 - x0, y1 - y0) / 2, cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
    [x0, x1, y0, y1] = [cx - span, cx + span, cy - span, cy + span];
  }
  if (!(x1 > x0)) { x0 -= 1; x1 += 1; }
  if (!(y1 > y0)) { y0 -= 1; y1 += 1; }
  const pad = { l: 60, r: 12, t: 10, b: 34 };
  const px = (v) => pad.l + ((tx(v) - x0) / (x1 - x0)) * (w - pad.l - pad.r);
  const py = (v) => h - pad.b - ((ty(v) - y0) / (y1 - y0)) * (h - pad.t - pad.b);

  ctx.strokeStyle = "#ccc";
  ctx.fillStyle = "#555";
  ctx.font = "11px system-ui";
  ctx.lineWidth = 1;
  ctx.strokeRect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  const ticks = (a, b, log) => {
    const out = [];
    for (let i = 0; i <= 4; i++) {
      const v = a + ((b - a) * i) / 4;
      out.push(log ? Math.pow(10, v) : v);
    }
    return out;
  };
  const fmt = (v) => (Math.abs(v) >= 1e-2 && Math.abs(v) < 1e4) || v === 0 ? (+v.toPrecision(3)).toString() : v.toExponential(1);
  ctx.textAlign = "center";
  for (const v of ticks(x0, x1, opts.logx)) ctx.fillText(fmt(v), px(v), h - pad.b + 14);
  ctx.textAlign = "right";
  for (const v of ticks(y0, y1, opts.logy)) ctx.fillText(fmt(v), pad.l - 4, py(v) + 4);
  ctx.textAlign = "center";
  if (opts.xlabel) ctx.fillText(opts.xlabel, (pad.l + w - pad.r) / 2, h - 4);

  ctx.save();
  ctx.beginPath();
  ctx.rect(pad.l, pad.t, w - pad.l - pad.r, h - pad.t - pad.b);
  ctx.clip();
  for (const s of series) {
    ctx.strokeStyle = ctx.fillStyle = s.color;
    ctx.lineWidth = s.width || 1.5;
    ctx.setLineDash(s.dash || []);
    if (s.points) {
      s.x.forEach((x, i) => {
        if (!ok(s.y[i])) return;
        ctx.beginPath();
        ctx.arc(px(x), py(s.y[i]), s.points, 0, 2 * Math.PI);
        ctx.fill();
      });
      continue;
    }
    ctx.beginPath();
    let pen = false;
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!ok(y)) { pen = false; return; }
      if (pen) ctx.lineTo(px(x), py(y)); else ctx.moveTo(px(x), py(y));
      pen = true;
    });
    ctx.stroke();
  }
  ctx.restore();
}

function legend(el, entries) {
  el.innerHTML = entries.map(([name, color]) => `<span><i style="background:${color}"></i>${name}</span>`).join("");
}

function status(el, text, isError = false) {
  el.textContent = text;
  el.classList.toggle("error", isError);
}

function formValues(form) {
  return Object.fromEntries(new FormData(form).entries());
}

function runTrajectory() {
  const form = document.getElementById("traj-form");
  const out = document.getElementById("traj-status");
  const v = formValues(form);
  const eps = Math.pow(2, -Number(v.j));
  const h = Number(v.ratio) * eps;
  try {
    const t0 = performance.now();
    const r = JSON.parse(trajectory(v.method, eps, h, Number(v.t_end)));
    const ms = performance.now() - t0;
    const col = COLORS[r.method];
    plot(document.getElementById("traj-canvas"), [
      { x: r.reference.map((p) => p[0]), y: r.reference.map((p) => p[1]), color: "#bbb", width: 3 },
      { x: r.x.map((p) => p[0]), y: r.x.map((p) => p[1]), color: col },
    ], { equal: true, xlabel: "x1 (vertical axis: x2)" });
    legend(document.getElementById("traj-legend"), [["reference", "#bbb"], [r.method, col]]);
    status(out,
      `${r.x.length - 1} steps, err_x = ${r.err_x.toExponential(2)}, err_vpar = ${r.err_vpar.toExponential(2)}, ` +
      `err_vperp = ${r.err_vperp.toExponential(2)}${r.flagged ? ", near resonance" : ""} (${ms.toFixed(0)} ms)`);
  } catch (e) {
    status(out, e.message || String(e), true);
  }
}

function runFilters() {
  const v = formValues(document.getElementById("filter-form"));
  const out = document.getElementById("filter-status");
  try {
    const r = JSON.parse(filterCurves(Number(v.y_max), 1200));
    const series = r.curves.map((c, i) => ({ x: r.y, y: c.re, color: PALETTE[i] }));
    series.push({ x: r.y, y: r.theta, color: PALETTE[5], dash: [4, 3] });
    plot(document.getElementById("filter-canvas"), series, { yrange: [-3, 6], xlabel: "h|B|" });
    legend(document.getElementById("filter-legend"), [
      ...r.curves.map((c, i) => [c.name, PALETTE[i]]),
      ["evaluation weight", PALETTE[5]],
    ]);
    status(out, "Response on the plane orthogonal to B (real part); gaps mark poles.");
  } catch (e) {
    status(out, e.message || String(e), true);
  }
}

function runScan() {
  const v = formValues(document.getElementById("scan-form"));
  const out = document.getElementById("scan-status");
  status(out, "running...");
  // yield once so the status text paints before the scan blocks the page
  setTimeout(() => {
    try {
      const eps = Math.pow(2, -Number(v.j));
      const t0 = performance.now();
      const r = JSON.parse(scan(eps, Number(v.k_from), Number(v.k_to)));
      const ms = performance.now() - t0;
      const series = [];
      for (const s of r.series) {
        series.push({ x: r.ratio, y: s.err_x, color: COLORS[s.method] });
        const flagged = s.err_x.map((e, i) => (s.flagged[i] ? e : null));
        series.push({ x: r.ratio, y: flagged, color: COLORS[s.method], points: 2.5 });
      }
      plot(document.getElementById("scan-canvas"), series, { logx: true, logy: true, xlabel: "h / epsilon" });
      legend(document.getElementById("scan-legend"), r.series.map((s) => [s.method, COLORS[s.method]]));
      status(out, `${r.k.length} step sizes per method; dots mark steps flagged as near-resonant (${ms.toFixed(0)} ms)`);
    } catch (e) {
      status(out, e.message || String(e), true);
    }
  }, 20);
}

function bind(id, fn) {
  document.getElementById(id).addEventListener("submit", (ev) => {
    ev.preventDefault();
    fn();
  });
}

await init();
document.title += ` ${version()}`;
bind("traj-form", runTrajectory);
bind("filter-form", runFilters);
bind("scan-form", runScan);
runTrajectory();
runFilters();
runScan();
