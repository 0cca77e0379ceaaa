import init, { propeller, eigenvalues, analyze_operator } from "./pkg/drumkit_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);
const tri = () => ["ax", "ay", "bx", "by", "cx", "cy"].map(num);

const PALETTE = ["#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6"];

// fit a set of points into a canvas, y up
function view(canvas, points) {
  let [x0, y0, x1, y1] = [Infinity, Infinity, -Infinity, -Infinity];
  for (const [x, y] of points) {
    x0 = Math.min(x0, x); x1 = Math.max(x1, x);
    y0 = Math.min(y0, y); y1 = Math.max(y1, y);
  }
  const pad = 16;
  const s = Math.min((canvas.width - 2 * pad) / (x1 - x0 || 1), (canvas.height - 2 * pad) / (y1 - y0 || 1));
  return ([x, y]) => [pad + (x - x0) * s, canvas.height - pad - (y - y0) * s];
}

function polygon(ctx, pts) {
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
  ctx.closePath();
}

function drawCopies(canvas, copies) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const map = view(canvas, copies.flatMap((c) => c.vertices));
  for (const c of copies) {
    const pts = c.vertices.map(map);
    polygon(ctx, pts);
    ctx.fillStyle = PALETTE[(c.i - 1) % PALETTE.length] + "55";
    ctx.fill();
    ctx.strokeStyle = "#333";
    ctx.stroke();
    const cx = pts.reduce((s, p) => s + p[0], 0) / 3;
    const cy = pts.reduce((s, p) => s + p[1], 0) / 3;
    ctx.fillStyle = "#000";
    ctx.fillText(String(c.i), cx - 3, cy + 4);
  }
}

// blue-white-red for signed nodal values
function color(v, vmax) {
  const t = Math.max(-1, Math.min(1, v / (vmax || 1)));
  const a = Math.round(255 * (1 - Math.abs(t)));
  return t >= 0 ? `rgb(255,${a},${a})` : `rgb(${a},${a},255)`;
}

function drawMesh(canvas, mesh, marks = []) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const map = view(canvas, mesh.vertices);
  const vmax = mesh.values.reduce((m, v) => Math.max(m, Math.abs(v)), 0);
  for (const t of mesh.triangles) {
    const pts = t.map((i) => map(mesh.vertices[i]));
    polygon(ctx, pts);
    if (mesh.values.length) {
      const v = (mesh.values[t[0]] + mesh.values[t[1]] + mesh.values[t[2]]) / 3;
      ctx.fillStyle = color(v, vmax);
      ctx.fill();
    }
    ctx.strokeStyle = "#0002";
    ctx.stroke();
  }
  for (const { points, style } of marks) {
    ctx.fillStyle = style;
    for (const p of points) {
      const [x, y] = map(p);
      ctx.beginPath();
      ctx.arc(x, y, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function guard(out, f) {
  out.classList.remove("err");
  try {
    f();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function build() {
  guard($("pairinfo"), () => {
    const r = JSON.parse(propeller(...tri()));
    drawCopies($("c1"), r.drum1);
    drawCopies($("c2"), r.drum2);
    const rows = r.transplant.map((row) => row.map((x) => String(x).padStart(3)).join("")).join("\n");
    $("pairinfo").textContent = `area of each drum ${r.area.toFixed(4)}\ntransplantation matrix (det ${r.det}):\n${rows}`;
  });
}

function solve() {
  guard($("eiginfo"), () => {
    const r = JSON.parse(eigenvalues(...tri(), num("level"), num("k"), num("mode")));
    drawMesh($("c1"), r.mesh1);
    drawMesh($("c2"), r.mesh2);
    const lines = r.lambda1.map(
      (l, i) => `${String(i + 1).padStart(3)}  ${l.toFixed(6).padStart(12)}  ${r.lambda2[i].toFixed(6).padStart(12)}  gap ${r.rel_gaps[i].toExponential(2)}`
    );
    $("eiginfo").textContent = "  k       drum 1        drum 2\n" + lines.join("\n");
  });
}

function analyzeOp() {
  guard($("opinfo"), () => {
    const which = document.querySelector("input[name=op]:checked").value;
    const r = JSON.parse(analyze_operator(...tri(), which, num("angle"), 1n));
    const marks = r.witness
      ? [
          { points: r.witness.f_support, style: "#e6194b" },
          { points: r.witness.g_support, style: "#4363d8" },
        ]
      : [];
    drawMesh($("c1"), r.mesh1, marks);
    drawMesh($("c2"), r.mesh2, r.witness ? [{ points: [r.witness.at], style: "#000" }] : []);
    const lines = [
      `exit code ${r.exit_code}`,
      `disjointness: ${r.verdict}, max overlap ${r.max_overlap?.toExponential(3)}`,
    ];
    if (r.witness) lines.push("witness: red and blue bumps have disjoint supports, their images meet at the black vertex");
    if (r.congruent !== null) lines.push(`congruent: ${r.congruent} (${r.criterion})`);
    if (r.isometry) lines.push(`recovered motion: ${JSON.stringify(r.isometry)}, fit rms ${r.fit_rms?.toExponential(2)}`);
    if (r.error) lines.push(r.error);
    $("opinfo").textContent = lines.join("\n");
  });
}

await init();
$("build").onclick = build;
$("eig").onclick = solve;
$("analyze").onclick = analyzeOp;
build();
