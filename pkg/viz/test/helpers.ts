/** Build a well-formed field CSV for an n-cell grid from a value function. */
export function makeCsv(
  n: number,
  value: (x: number, y: number) => [number, number],
): string {
  const side = n + 1;
  const lines = ["x,y,re,im"];
  for (let k = 0; k < side * side; k++) {
    const x = (k % side) / n;
    const y = Math.floor(k / side) / n;
    const [re, im] = value(x, y);
    lines.push(`${x},${y},${re},${im}`);
  }
  return lines.join("\n") + "\n";
}
