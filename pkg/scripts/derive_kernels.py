"""Regenerate ``roughbl/_kernel_derivs.py`` from the closed-form Stokes Poisson kernel.

Run once after changing the kernel; the output is committed so that no symbolic
algebra happens at runtime.
"""

from pathlib import Path

import sympy as s

t, y = s.symbols("t y", real=True)
r4 = (t**2 + y**2) ** 2
G = [[2 * y * t**2 / (s.pi * r4), 2 * y**2 * t / (s.pi * r4)],
     [2 * y**2 * t / (s.pi * r4), 2 * y**3 / (s.pi * r4)]]

lines = [
    '"""Partial derivatives of the half-plane Stokes Poisson kernel.',
    "",
    "Generated by scripts/derive_kernels.py; do not edit by hand.",
    '"""',
    "",
    "import numpy as np",
    "",
    "_PI = np.pi",
    "",
]
names = {}
for order in range(4):
    for b1 in range(order + 1):
        b2 = order - b1
        name = f"_d{b1}{b2}"
        names[(b1, b2)] = name
        ents = [s.factor(s.diff(G[i][j], t, b1, y, b2)) for i, j in ((0, 0), (0, 1), (1, 1))]
        subs, red = s.cse(ents, symbols=s.numbered_symbols("c"))
        lines.append(f"def {name}(t, y):")
        for sym, expr in subs:
            lines.append(f"    {sym} = {s.pycode(expr).replace('math.pi', '_PI')}")
        codes = [s.pycode(e).replace("math.pi", "_PI") for e in red]
        lines.append(f"    g11 = {codes[0]}")
        lines.append(f"    g12 = {codes[1]}")
        lines.append(f"    g22 = {codes[2]}")
        lines.append("    return g11, g12, g22")
        lines.append("")
        lines.append("")
lines.append("TABLE = {")
for k, v in names.items():
    lines.append(f"    {k}: {v},")
lines.append("}")
out = Path(__file__).resolve().parents[1] / "src" / "roughbl" / "_kernel_derivs.py"
out.write_text("\n".join(lines) + "\n")
print(f"wrote {out}")
