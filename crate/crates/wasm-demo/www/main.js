// Built glue lives in ./pkg (see README: wasm-bindgen --target web).
import init, { generate, coarsen, place } from "./pkg/fusplace_wasm_demo.js";

const $ = (id) => document.getElementById(id);
let graph = null; // current graph-file JSON text

function show(lines) {
  $("error").textContent = "";
  $("summary").textContent = lines.join("\n");
}

function guard(fn) {
  return () => {
    try {
      fn();
    } catch (e) {
      $("error").textContent = String(e.message ?? e);
    }
  };
}

function describe(text) {
  const g = JSON.parse(text);
  const fused = g.nodes.filter((n) => n.tag === "fused").length;
  return `${g.nodes.length} operators (${fused} fused), ${g.edges.length} edges`;
}

function drawGantt(bars, makespan) {
  const canvas = $("gantt");
  const lanes = [...new Set(bars.map((b) => b.lane))].sort();
  const rowH = 24, left = 70, width = canvas.width - left - 10;
  canvas.height = lanes.length * rowH + 30;
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "11px sans-serif";
  const x = (t) => left + (makespan > 0 ? (t / makespan) * width : 0);
  lanes.forEach((lane, r) => {
    ctx.fillStyle = "#333";
    ctx.fillText(lane, 4, r * rowH + 16);
  });
  for (const b of bars) {
    const r = lanes.indexOf(b.lane);
    const isFlow = b.lane.includes("->");
    ctx.fillStyle = isFlow ? "#e8a33d" : b.label.includes("∘") ? "#3d7be8" : "#7fa8ef";
    const w = Math.max(1, x(b.end_s) - x(b.start_s));
    ctx.fillRect(x(b.start_s), r * rowH + 4, w, rowH - 8);
    if (w > 30) {
      ctx.fillStyle = "#fff";
      ctx.fillText(isFlow ? b.label : `${b.node} ${b.label}`, x(b.start_s) + 3, r * rowH + 16, w - 6);
    }
  }
  ctx.fillStyle = "#333";
  ctx.fillText("0", left, canvas.height - 8);
  const end = `${(makespan * 1000).toFixed(3)} ms`;
  ctx.fillText(end, left + width - ctx.measureText(end).width, canvas.height - 8);
}

await init();

$("gen").onclick = guard(() => {
  graph = generate(
    +$("depth").value, +$("width").value, +$("density").value,
    +$("edgeProb").value, +$("devices").value, +$("seed").value,
  );
  $("coarsen").disabled = false;
  $("place").disabled = false;
  show([`generated: ${describe(graph)}`]);
});

$("coarsen").onclick = guard(() => {
  const out = JSON.parse(coarsen(graph));
  graph = JSON.stringify(out.graph);
  show([`coarsened: ${out.before} -> ${out.after} operators`, describe(graph)]);
});

$("place").onclick = guard(() => {
  const out = JSON.parse(place(graph, $("method").value, +$("bw").value * 1e9));
  show([
    `${out.method}: makespan ${(out.makespan_s * 1000).toFixed(4)} ms (${out.status}, ${out.nodes} search nodes)`,
    out.placement.assignments.map((a) => `${a.op}@${a.device}`).join(" "),
  ]);
  drawGantt(out.bars, out.makespan_s);
});
