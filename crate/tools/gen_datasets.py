#!/usr/bin/env python3
"""Regenerates the bundled CSV datasets and their manifest.

UCI sets come from scikit-learn's bundled copies (no network); the 2D
clustering sets are generated here with fixed seeds. Output is plain CSV
with a header row and a trailing `class` column.
"""
import hashlib
import json
import math
from pathlib import Path

import numpy as np
from sklearn import datasets

OUT = Path(__file__).resolve().parent.parent / "data"
OUT.mkdir(exist_ok=True)


def write_csv(name, X, y_names, feature_names, source):
    path = OUT / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        fh.write(",".join([*feature_names, "class"]) + "\n")
        for row, label in zip(X, y_names):
            cells = [repr(float(v)) for v in row]
            fh.write(",".join([*cells, str(label)]) + "\n")
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return {
        "file": path.name,
        "label": "class",
        "n": int(len(X)),
        "d": int(X.shape[1]),
        "classes": int(len(set(y_names))),
        "sha256": digest,
        "source": source,
    }


def uci(name, loader, source):
    bunch = loader()
    names = [str(n).replace(" ", "_").replace(",", "") for n in bunch.feature_names]
    labels = [str(bunch.target_names[t]) for t in bunch.target]
    return name, write_csv(name, np.asarray(bunch.data, dtype=float), labels, names, source)


def blobs3():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [12.0, 0.0], [0.0, 12.0]])
    X, y = [], []
    for k, c in enumerate(centers):
        pts = rng.normal(loc=c, scale=1.0, size=(200, 2))
        X.append(pts)
        y += [f"blob{k}"] * 200
    X = np.vstack(X)
    order = np.random.default_rng(8).permutation(len(X))
    return X[order], [y[i] for i in order]


def grid15():
    rng = np.random.default_rng(15)
    X, y = [], []
    k = 0
    for gx in range(5):
        for gy in range(3):
            c = np.array([10.0 * gx, 10.0 * gy])
            X.append(rng.normal(loc=c, scale=0.8, size=(50, 2)))
            y += [f"cell{k}"] * 50
            k += 1
    X = np.vstack(X)
    order = np.random.default_rng(16).permutation(len(X))
    return X[order], [y[i] for i in order]


def spiral3():
    rng = np.random.default_rng(31)
    X, y = [], []
    for arm in range(3):
        t = np.linspace(0.3, 2.5, 104)
        theta = t * 2.2 + arm * 2.0 * math.pi / 3.0
        pts = np.stack([t * np.cos(theta), t * np.sin(theta)], axis=1)
        pts += rng.normal(scale=0.03, size=pts.shape)
        X.append(pts)
        y += [f"arm{arm}"] * 104
    X = np.vstack(X)
    order = np.random.default_rng(32).permutation(len(X))
    return X[order], [y[i] for i in order]


manifest = {}
manifest.update([uci("iris", datasets.load_iris, "scikit-learn bundled copy of the UCI Iris data")])
manifest.update([uci("wine", datasets.load_wine, "scikit-learn bundled copy of the UCI Wine data")])
manifest.update([
    uci(
        "breast-cancer",
        datasets.load_breast_cancer,
        "scikit-learn bundled copy of the UCI Breast Cancer Wisconsin (Diagnostic) data",
    )
])
manifest.update([uci("digits", datasets.load_digits, "scikit-learn bundled copy of the UCI Optical Digits data (8x8)")])

Xb, yb = blobs3()
manifest["blobs3"] = write_csv("blobs3", Xb, yb, ["x", "y"], "generated: 3 Gaussian blobs, seed 7")
Xg, yg = grid15()
manifest["grid15"] = write_csv("grid15", Xg, yg, ["x", "y"], "generated: 5x3 Gaussian grid, seed 15")
Xm, ym = datasets.make_moons(n_samples=400, noise=0.06, random_state=21)
manifest["moons"] = write_csv(
    "moons", np.asarray(Xm, dtype=float), [f"moon{t}" for t in ym], ["x", "y"], "generated: two moons, seed 21"
)
Xs, ys = spiral3()
manifest["spiral3"] = write_csv("spiral3", Xs, ys, ["x", "y"], "generated: 3-arm spiral, seed 31")

with open(OUT / "manifest.json", "w") as fh:
    json.dump({"datasets": dict(sorted(manifest.items()))}, fh, indent=2, sort_keys=True)
    fh.write("\n")
print("wrote", len(manifest), "datasets to", OUT)
