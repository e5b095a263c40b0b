#!/usr/bin/env python3
"""Writes titles.json: 50 mangled or unrelated reference strings against
dataset paper titles, with the decision of a brute-force similarity oracle
(full-matrix Levenshtein, threshold 0.9, containment short-circuit) frozen in.
"""
import json
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
THRESHOLD = 0.9

TITLES = [
    "Deep Learning Techniques for Automatic MRI Cardiac Multi-Structures Segmentation and Diagnosis: "
    "Is the Problem Solved?",
    "The Multimodal Brain Tumor Image Segmentation Benchmark (BRATS)",
    "From Detection of Individual Metastases to Classification of Lymph Node Status at the Patient Level: "
    "The CAMELYON17 Challenge",
    "ChestX-Ray8: Hospital-Scale Chest X-Ray Database and Benchmarks on Weakly-Supervised Classification "
    "and Localization of Common Thorax Diseases",
    "Ridge-Based Vessel Segmentation in Color Images of the Retina",
    "CheXpert: A Large Chest Radiograph Dataset with Uncertainty Labels and Expert Comparison",
    "PadChest: A large chest x-ray image dataset with multi-label annotated reports",
    "Multi-Centre, Multi-Vendor and Multi-Disease Cardiac Segmentation: The M&Ms Challenge",
]
UNRELATED = [
    "Deep learning for segmentation",
    "U-Net: Convolutional Networks for Biomedical Image Segmentation",
    "A survey on deep learning in medical image analysis",
    "Cardiac segmentation with deep learning: a review",
    "Brain tumor segmentation using convolutional neural networks in MRI images",
    "Chest X-ray classification with weak supervision",
]


def normalize(s):
    mapped = "".join(c.lower() if c.isalnum() else " " for c in s)
    return " ".join(mapped.split())


def levenshtein(a, b):
    d = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        d[i][0] = i
    for j in range(len(b) + 1):
        d[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[len(a)][len(b)]


def oracle(raw, parsed, title):
    want = normalize(title)
    if want in normalize(raw):
        return True, None
    if parsed is None:
        return False, None
    p = normalize(parsed)
    longest = max(len(p), len(want))
    sim = 1.0 if longest == 0 else 1.0 - levenshtein(p, want) / longest
    return sim >= THRESHOLD, sim


def typo(rng, s, k):
    """k random single-character edits on letters."""
    chars = list(s)
    for _ in range(k):
        idxs = [i for i, c in enumerate(chars) if c.isalpha()]
        i = rng.choice(idxs)
        op = rng.choice(["del", "sub", "swap"])
        if op == "del":
            del chars[i]
        elif op == "sub":
            chars[i] = "q" if chars[i] != "q" else "z"
        elif i + 1 < len(chars):
            chars[i], chars[i + 1] = chars[i + 1], chars[i]
    return "".join(chars)


def entry(rng, kind):
    title = rng.choice(TITLES)
    authors = rng.choice(["Smith, J., et al.", "Bernard, O., Lalande, A.", "Wang, X., Peng, Y.", "Menze, B.H."])
    tail = rng.choice(["IEEE TMI (2018)", "In: CVPR, pp. 1-9 (2017)", "Medical Image Analysis 42 (2019)"])
    parsed = title
    if kind == "casing":
        parsed = rng.choice([title.upper(), title.lower(), title.replace(":", " -").replace("-", " ")])
    elif kind == "typo":
        parsed = typo(rng, title, rng.randint(1, 16))
    elif kind == "truncated":
        words = title.split()
        parsed = " ".join(words[: rng.randint(len(words) // 2, len(words) - 1)])
    elif kind == "subtitle":
        parsed = title + rng.choice([": A Benchmark", " (extended version)", ", Revisited"])
    elif kind == "unrelated":
        parsed = rng.choice(UNRELATED)
    raw = f"{authors}: {parsed}. {tail}"
    if kind in ("typo", "truncated") and rng.random() < 0.3:
        drop_parsed = True
    else:
        drop_parsed = False
    return {"kind": kind, "registry_title": title, "raw": raw, "parsed_title": None if drop_parsed else parsed}


def main():
    rng = random.Random(90)
    kinds = ["casing"] * 6 + ["typo"] * 22 + ["truncated"] * 8 + ["subtitle"] * 4 + ["unrelated"] * 10
    entries = []
    for k in kinds:
        e = entry(rng, k)
        e["expected"], sim = oracle(e["raw"], e["parsed_title"], e["registry_title"])
        entries.append((e, sim))
    (HERE / "titles.json").write_text(json.dumps([e for e, _ in entries], indent=1) + "\n")
    near = sum(1 for _, s in entries if s is not None and 0.85 <= s <= 0.95)
    print(f"{len(entries)} entries, {sum(e['expected'] for e, _ in entries)} matches, {near} within 0.05 of threshold")


if __name__ == "__main__":
    main()
