/** Symmetric blue-white-red map; zero lands on neutral white. */

export function divergingColors(values: Float32Array): Float32Array {
  let vmax = 0;
  for (const v of values) vmax = Math.max(vmax, Math.abs(v));
  const rgb = new Float32Array(values.length * 3);
  for (let i = 0; i < values.length; i++) {
    const t = vmax > 0 ? values[i] / vmax : 0;
    let r = 1,
      g = 1,
      b = 1;
    if (t >= 0) {
      g = 1 - t;
      b = 1 - t;
    } else {
      r = 1 + t;
      g = 1 + t;
    }
    rgb[3 * i] = r;
    rgb[3 * i + 1] = g;
    rgb[3 * i + 2] = b;
  }
  return rgb;
}
