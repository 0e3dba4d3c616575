import init, { schedule_trace, score_submission, psi_compare } from "./pkg/dimabsa_web.js";

const $ = (id) => document.getElementById(id);

function show(out, fn) {
  out.classList.remove("err");
  try {
    return fn();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
    return null;
  }
}

function plot(svg, values, warmup) {
  const w = svg.width.baseVal.value, h = svg.height.baseVal.value, pad = 20;
  const n = Math.max(values.length - 1, 1);
  const x = (i) => pad + (i / n) * (w - 2 * pad);
  const y = (v) => h - pad - v * (h - 2 * pad);
  const points = values.map((v, i) => `${x(i).toFixed(1)},${y(v).toFixed(1)}`).join(" ");
  svg.innerHTML =
    `<line x1="${pad}" y1="${y(0)}" x2="${w - pad}" y2="${y(0)}" stroke="#999"/>` +
    `<line x1="${pad}" y1="${y(1)}" x2="${w - pad}" y2="${y(1)}" stroke="#ddd"/>` +
    `<line x1="${x(warmup)}" y1="${pad}" x2="${x(warmup)}" y2="${h - pad}" stroke="#e0a000" stroke-dasharray="4"/>` +
    `<polyline fill="none" stroke="#1565c0" stroke-width="2" points="${points}"/>` +
    `<text x="2" y="${y(1) + 4}" font-size="11">1.0</text><text x="2" y="${y(0) + 4}" font-size="11">0</text>`;
}

function runSchedule() {
  const out = $("sch-out");
  show(out, () => {
    const r = JSON.parse(schedule_trace(
      Number($("sch-steps").value), $("sch-metrics").value,
      Number($("sch-warmup").value), Number($("sch-factor").value), Number($("sch-patience").value)));
    plot($("sch-plot"), r.multipliers, r.warmup_steps);
    const reduced = r.reduced_after_epochs.length ? r.reduced_after_epochs.join(", ") : "none";
    out.textContent = `${r.total_steps} steps, warmup ${r.warmup_steps}, reduced after epoch(s): ${reduced}`;
  });
}

function runScore() {
  const out = $("sc-out");
  show(out, () => {
    const r = JSON.parse(score_submission($("sc-subtask").value, $("sc-pred").value, $("sc-gold").value));
    out.textContent = r.table;
  });
}

function runPsi() {
  const out = $("psi-out");
  show(out, () => {
    const r = JSON.parse(psi_compare($("psi-ref").value, $("psi-cmp").value, Number($("psi-bins").value)));
    out.textContent =
      `PSI ${r.psi.toFixed(4)} (${r.level})\n` +
      `edges      ${r.edges.map((e) => e.toFixed(2)).join(" ")}\n` +
      `reference  ${r.reference_counts.join(" ")}\ncomparison ${r.comparison_counts.join(" ")}`;
  });
}

const SAMPLE_GOLD = `{"ID": "r1", "Text": "The pasta was great but service slow", "Triplet": [{"Aspect": "pasta", "Opinion": "great", "VA": "7.50#6.00"}, {"Aspect": "service", "Opinion": "slow", "VA": "3.00#5.25"}]}
{"ID": "r2", "Text": "Loved it", "Triplet": [{"Aspect": "NULL", "Opinion": "Loved", "VA": "8.00#7.00"}]}`;
const SAMPLE_PRED = `{"ID": "r1", "Triplet": [{"Aspect": "pasta", "Opinion": "great", "VA": "7.20#6.00"}]}
{"ID": "r2", "Triplet": [{"Aspect": "NULL", "Opinion": "Loved", "VA": "9.00#7.00"}]}`;

await init();
$("sc-gold").value = SAMPLE_GOLD;
$("sc-pred").value = SAMPLE_PRED;
$("sch-run").addEventListener("click", runSchedule);
$("sc-run").addEventListener("click", runScore);
$("psi-run").addEventListener("click", runPsi);
runSchedule();
runScore();
runPsi();
