#!/usr/bin/env python3
"""Generate the golden table for the coefficient expression language.

Independent reference: each case is evaluated by Python itself after
rewriting '^' to '**' (same precedence and associativity as the library
grammar: '**' binds tighter than unary minus and is right-associative).
Output: tests/data/expression_golden.csv with columns
expression;t;x1;x2;z;value (values in shortest round-trip decimal).
"""

import math
import random
import os

TEMPLATES = [
    "1",
    "-2.5",
    "t",
    "x1",
    "x2",
    "z",
    "x1+x2*z",
    "x1*x2-t/2",
    "-x1^2",
    "2^-2",
    "x1^2+x2^2",
    "2*x1^3-x2",
    "sin(x1)",
    "cos(x1*x2)",
    "exp(-x1^2/2)",
    "tanh(3*x1)",
    "abs(x2-t)",
    "sqrt(1+x1^2)",
    "min(x1,x2)",
    "max(z,0.5*t)",
    "0.4*sin(x1)*z",
    "sin(x1+t)-cos(x2-z)",
    "1/(1+exp(-x1))",
    "(x1+x2)/(3+t)",
    "min(abs(x1),max(x2,z))^2",
]

ENV = {
    "sin": math.sin, "cos": math.cos, "exp": math.exp, "tanh": math.tanh,
    "abs": abs, "min": min, "max": max, "sqrt": math.sqrt,
    "__builtins__": {},
}


def main():
    rng = random.Random(20260823)
    out_dir = os.path.join(os.path.dirname(__file__), "..", "tests", "data")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for expr in TEMPLATES:
        for _ in range(8):
            t = round(rng.uniform(0.0, 2.0), 6)
            x1 = round(rng.uniform(-3.0, 3.0), 6)
            x2 = round(rng.uniform(-3.0, 3.0), 6)
            z = round(rng.uniform(-2.0, 2.0), 6)
            scope = dict(ENV)
            scope.update(t=t, x1=x1, x2=x2, z=z)
            value = eval(expr.replace("^", "**"), scope)  # noqa: S307
            rows.append((expr, t, x1, x2, z, float(value)))
    assert len(rows) == 200, len(rows)
    path = os.path.join(out_dir, "expression_golden.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("expression;t;x1;x2;z;value\n")
        for expr, t, x1, x2, z, value in rows:
            fh.write(f"{expr};{t!r};{x1!r};{x2!r};{z!r};{value!r}\n")
    print(f"wrote {len(rows)} cases to {path}")


if __name__ == "__main__":
    main()
