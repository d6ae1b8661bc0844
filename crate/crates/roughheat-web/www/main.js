import init, { sampleForcing, smooth, layerDecay } from "./pkg/roughheat_web.js";

const $ = (id) => document.getElementById(id);
let sample = null;
let n = 0;

function paint(values, size) {
  const c = $("field");
  const ctx = c.getContext("2d");
  const img = ctx.createImageData(size, size);
  let m = 0;
  for (const v of values) m = Math.max(m, Math.abs(v));
  for (let j = 0; j < size; j++) {
    for (let i = 0; i < size; i++) {
      const v = values[j * size + i] / (m || 1);
      const p = 4 * ((size - 1 - j) * size + i);
      img.data[p] = 128 + 127 * Math.max(v, 0);
      img.data[p + 1] = 128 - 127 * Math.abs(v);
      img.data[p + 2] = 128 + 127 * Math.max(-v, 0);
      img.data[p + 3] = 255;
    }
  }
  const tmp = document.createElement("canvas");
  tmp.width = tmp.height = size;
  tmp.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(tmp, 0, 0, c.width, c.height);
}

function redraw() {
  const lt = Number($("t").value);
  $("tval").textContent = lt <= -20 ? "off" : `T = 2^${lt}`;
  paint(lt <= -20 ? sample : smooth(sample, n, 2 ** lt), n);
}

function draw() {
  n = Number($("n").value);
  sample = sampleForcing(n, Number($("ap").value), 1.0, Number($("seed").value));
  redraw();
}

function decay() {
  const out = layerDecay(2048, Number($("alpha").value), Number($("a0").value), Number($("k").value), 1e-3, 1e-1, 21);
  const k = Number($("k").value);
  const alpha = Number($("alpha").value);
  $("slope").textContent = `fitted exponent ${out[0].toFixed(3)}, scaling (α − k)/2 = ${((alpha - k) / 2).toFixed(3)}`;
  const xs = [], ys = [];
  for (let i = 1; i < out.length; i += 2) {
    xs.push(Math.log10(out[i]));
    ys.push(Math.log10(out[i + 1]));
  }
  const c = $("plot");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const pad = 30;
  const sx = (x) => pad + ((x - x0) / (x1 - x0 || 1)) * (c.width - 2 * pad);
  const sy = (y) => c.height - pad - ((y - y0) / (y1 - y0 || 1)) * (c.height - 2 * pad);
  ctx.strokeStyle = "#888";
  ctx.strokeRect(pad, pad, c.width - 2 * pad, c.height - 2 * pad);
  ctx.fillStyle = "#333";
  ctx.fillText(`x₂ = 10^${x0.toFixed(0)} … 10^${x1.toFixed(0)}`, pad, c.height - 8);
  ctx.fillText(`sup = 10^${y0.toFixed(2)} … 10^${y1.toFixed(2)}`, pad, 18);
  ctx.strokeStyle = "#c33";
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(ys[i])) : ctx.moveTo(sx(x), sy(ys[i]))));
  ctx.stroke();
}

function guarded(f) {
  return () => {
    try {
      f();
      $("status").textContent = "";
    } catch (e) {
      $("status").textContent = String(e);
    }
  };
}

await init();
$("draw").onclick = guarded(draw);
$("t").oninput = guarded(redraw);
$("decay").onclick = guarded(decay);
guarded(draw)();
guarded(decay)();
