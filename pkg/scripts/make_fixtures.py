"""Regenerate the CSV fixtures under tests/fixtures (deterministic)."""

import csv
from pathlib import Path

import numpy as np

from fairperm.simlab import gen_scored_population

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures"


def write(name, header, rows):
    with open(OUT / name, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    write("six_rows.csv", ["id", "gender", "label", "score"], [
        [1, "M", 1, 0.91], [2, "F", 0, 0.12], [3, "M", 0, 0.40],
        [4, "F", 1, 0.77], [5, "M", 1, 0.65], [6, "F", 0, 0.05],
    ])
    write("bad_score.csv", ["gender", "label", "score"], [
        ["M", 1, 0.9], ["F", 0, 0.2], ["M", 0, "n/a"], ["F", 1, 0.7],
    ])

    rng = np.random.default_rng(20240)
    base = [(int(rng.random() < 0.5), round(float(rng.random()), 4)) for _ in range(60)]
    write("identical_groups.csv", ["group", "label", "score", "pred"],
          [[g, y, s, int(s > 0.5)] for g in ("A", "B") for y, s in base])

    # FNR is 1 in group A (every positive missed) and 0 in group B
    rows = []
    for g, miss in (("A", True), ("B", False)):
        for i in range(200):
            positive = i < 100
            pred = (not miss) if positive else int(i % 4 == 0)
            rows.append([g, int(positive), int(pred)])
    write("fnr_extreme.csv", ["group", "label", "pred"], rows)

    # synthetic stand-in for a scored audit set, shaped like the public recidivism data
    data = gen_scored_population(8000, np.random.default_rng(7))
    write("scored_synthetic.csv", ["sex", "two_year_recid", "score"], [
        ["Male" if a else "Female", int(y), round(float(s), 6)]
        for a, y, s in zip(data.in_a, data.positive, data.score)
    ])


if __name__ == "__main__":
    main()
