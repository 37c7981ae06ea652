import init, { threshold_curve, cluster, cutoff } from "./pkg/kbforge_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(out, f) {
  out.classList.remove("err");
  try {
    out.textContent = f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message || e);
  }
}

function bar(width) {
  return "#".repeat(Math.max(0, Math.round(width)));
}

function plotCurve() {
  show($("t-out"), () => {
    const pts = JSON.parse(threshold_curve(BigInt(num("t-max")), num("t-alpha"), num("t-high"), num("t-low"), 16));
    return pts
      .map((p) => `${String(p.frequency).padStart(10)}  ${p.threshold.toFixed(3)}  ${bar((p.threshold - 0.5) * 80)}`)
      .join("\n");
  });
}

function runCluster() {
  show($("c-out"), () => {
    const clusters = JSON.parse(cluster($("c-in").value, num("t-alpha"), num("t-high"), num("t-low")));
    return clusters
      .map((c) => `${c.representative}\n` + c.members.map(([n, f]) => `    ${n} (${f})`).join("\n"))
      .join("\n");
  });
}

function runCutoff() {
  show($("k-out"), () => {
    const r = JSON.parse(cutoff($("k-in").value, num("k-ratio"), BigInt(num("k-min"))));
    const peak = Math.max(1, ...Object.values(r.counts));
    const rows = Object.entries(r.counts).map(([y, c]) => {
      const mark = Number(y) === r.cutoff ? "  <- cutoff" : "";
      return `${y} ${String(c).padStart(8)} ${bar((c * 40) / peak)}${mark}`;
    });
    if (r.cutoff === null) rows.push("no cutoff detected");
    return rows.join("\n");
  });
}

await init();
$("t-run").onclick = plotCurve;
$("c-run").onclick = runCluster;
$("k-run").onclick = runCutoff;
plotCurve();
runCluster();
runCutoff();
