"""Convert the public Abalone, Wisconsin diagnostic breast cancer and GBSG
files into the plain numeric CSVs under data/.

Sources (all redistributed inside PyPI wheels):
  abalone      scikit-lego   sklego/data/abalone.zip
  breast       scikit-learn  sklearn.datasets.load_breast_cancer
  gbsg         lifelines     lifelines/datasets/gbsg2.csv

Usage: python3 scripts/prepare_data.py ABALONE_CSV GBSG2_CSV OUT_DIR
"""
import csv
import sys

from sklearn.datasets import load_breast_cancer


def abalone(src, dst):
    with open(src) as f, open(dst, "w", newline="") as g:
        r = csv.DictReader(f)
        w = csv.writer(g)
        cols = ["length", "diameter", "height", "whole_weight",
                "shucked_weight", "viscera_weight", "shell_weight"]
        w.writerow(cols + ["male", "female", "age"])
        for row in r:
            sex = row["sex"]
            w.writerow([row[c] for c in cols]
                       + [int(sex == "M"), int(sex == "F"),
                          float(row["rings"]) + 1.5])


def breast(dst):
    bc = load_breast_cancer()
    names = []
    for n in bc.feature_names:
        n = n.replace("concave points", "concave_points").replace("fractal dimension", "fractal_dimension")
        if n.startswith("mean "):
            names.append(n[5:].replace(" ", "_") + "_mean")
        elif n.startswith("worst "):
            names.append(n[6:].replace(" ", "_") + "_worst")
        else:
            names.append(n.replace(" error", "").replace(" ", "_") + "_se")
    with open(dst, "w", newline="") as g:
        w = csv.writer(g)
        w.writerow(names + ["malignant"])
        for x, t in zip(bc.data, bc.target):
            w.writerow([repr(float(v)) for v in x] + [1 - int(t)])


def gbsg(src, dst):
    with open(src) as f, open(dst, "w", newline="") as g:
        r = csv.DictReader(f)
        w = csv.writer(g)
        w.writerow(["age", "meno", "tsize", "tgrade", "pnodes", "progrec",
                    "estrec", "hormon", "time", "status"])
        for row in r:
            w.writerow([row["age"], int(row["menostat"] == "Post"), row["tsize"],
                        row["tgrade"], row["pnodes"], row["progrec"], row["estrec"],
                        int(row["horTh"] == "yes"), row["time"], row["cens"]])


if __name__ == "__main__":
    ab, gb, out = sys.argv[1:4]
    abalone(ab, f"{out}/abalone.csv")
    breast(f"{out}/breast_cancer.csv")
    gbsg(gb, f"{out}/gbsg.csv")
