#!/usr/bin/env python3
"""Regenerates data/sample_corpus deterministically.

Outputs
  books.jsonl, panels.jsonl   24 books, two per genre
  annotations.jsonl           ground truth by annotator "gt" on 2228 pairs
  oracle.jsonl                a label for every within-page pair (for `loop`)
  agreement_eval.jsonl        three annotators on a 129-pair evaluation set
  features.txt                16-d panel descriptors

Labels follow a per-book Markov chain with a strong self-transition, then
the ground-truth set is nudged to the exact target counts. Panel descriptors
are a random walk along each page whose step depends on the transition label,
so the pair feature (first ++ second) carries the label.
"""

import argparse
import json
import random
from pathlib import Path

LABELS = ["ACT", "ASP", "SUB", "SCE", "MOM", "NON"]
# 2228 records; each fraction is within 1e-3 of .332 .083 .204 .101 .126 .151
TARGET_COUNTS = [741, 186, 456, 226, 282, 337]
EVAL_PAIRS = 129
EVAL_KAPPAS = {("a1", "a2"): 0.524, ("a2", "a3"): 0.631, ("a1", "a3"): 0.774}
GENRES = [
    "animal", "battle", "fantasy", "four frame cartoons", "historical drama", "horror",
    "humor", "love romance", "romantic comedy", "science fiction", "sports", "suspense",
]
# label preference per genre (multiplies the base mix)
BIAS = {
    "battle": [2.2, 1, 0.6, 1, 1, 1], "sports": [2.0, 1, 0.7, 1, 1, 1],
    "suspense": [1.8, 1, 0.8, 1.2, 1, 1], "historical drama": [1.7, 1, 0.8, 1.2, 1, 1],
    "love romance": [0.6, 1.3, 2.2, 1, 1, 1], "romantic comedy": [0.6, 1.3, 2.0, 1, 1, 1],
}
DIM = 16


def kappa(a, b):
    n = len(a)
    po = sum(x == y for x, y in zip(a, b)) / n
    pe = sum((a.count(l) / n) * (b.count(l) / n) for l in LABELS)
    return (po - pe) / (1 - pe)


def markov_labels(rng, n, weights, stay=0.55):
    out = []
    for _ in range(n):
        if out and rng.random() < stay:
            out.append(out[-1])
        else:
            out.append(rng.choices(LABELS, weights=weights)[0])
    return out


def fix_counts(rng, labels, targets):
    counts = {l: labels.count(l) for l in LABELS}
    want = dict(zip(LABELS, targets))
    idx = list(range(len(labels)))
    rng.shuffle(idx)
    for i in idx:
        l = labels[i]
        if counts[l] > want[l]:
            deficit = [m for m in LABELS if counts[m] < want[m]]
            if not deficit:
                break
            m = rng.choice(deficit)
            labels[i] = m
            counts[l] -= 1
            counts[m] += 1
    assert [labels.count(l) for l in LABELS] == list(targets)


def eval_annotators(rng, base):
    """Three raters on `base` whose pairwise kappas round to EVAL_KAPPAS."""
    raters = {r: list(base) for r in ("a1", "a2", "a3")}

    def err():
        return sum((kappa(raters[a], raters[b]) - t) ** 2 for (a, b), t in EVAL_KAPPAS.items())

    e = err()
    for _ in range(200000):
        r = rng.choice(list(raters))
        i = rng.randrange(len(base))
        old = raters[r][i]
        raters[r][i] = rng.choice(LABELS)
        e2 = err()
        if e2 <= e:
            e = e2
        else:
            raters[r][i] = old
        if all(round(kappa(raters[a], raters[b]), 3) == t for (a, b), t in EVAL_KAPPAS.items()):
            break
    for (a, b), t in EVAL_KAPPAS.items():
        assert round(kappa(raters[a], raters[b]), 3) == t, (a, b, kappa(raters[a], raters[b]))
    return raters


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "data" / "sample_corpus"))
    ap.add_argument("--seed", type=int, default=20201)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base_mix = [c / sum(TARGET_COUNTS) for c in TARGET_COUNTS]
    steps = {l: [rng.gauss(0, 1.0) for _ in range(DIM)] for l in LABELS}

    books, panels, pairs, features = [], [], [], []
    labels = {}  # pair key -> label
    for b in range(24):
        genre = GENRES[b % len(GENRES)]
        book_id = f"sample{b:02d}"
        n_pages = 34
        books.append({"book_id": book_id, "title": f"Sample {b:02d}", "genre": genre, "page_count": n_pages})
        w = [m * f for m, f in zip(base_mix, BIAS.get(genre, [1] * 6))]
        for page in range(n_pages):
            n_panels = rng.randint(3, 8)
            page_labels = markov_labels(rng, n_panels - 1, w)
            v = [rng.gauss(0, 1.0) for _ in range(DIM)]
            for i in range(n_panels):
                panels.append({"book_id": book_id, "page_index": page, "panel_index": i})
                features.append((book_id, page, i, list(v)))
                if i + 1 < n_panels:
                    key = (book_id, page, i)
                    pairs.append(key)
                    labels[key] = page_labels[i]
                    step = steps[page_labels[i]]
                    v = [x + s + rng.gauss(0, 0.35) for x, s in zip(v, step)]

    # ground truth: whole pages in random order until 2228 pairs are covered
    pages = sorted({(b, p) for b, p, _ in pairs})
    rng.shuffle(pages)
    by_page = {}
    for key in pairs:
        by_page.setdefault(key[:2], []).append(key)
    gt_keys = []
    for pg in pages:
        for key in by_page[pg]:
            if len(gt_keys) < sum(TARGET_COUNTS):
                gt_keys.append(key)
    gt_keys.sort()
    gt_labels = [labels[k] for k in gt_keys]
    fix_counts(rng, gt_labels, TARGET_COUNTS)
    for k, l in zip(gt_keys, gt_labels):
        labels[k] = l
    # recompute descriptors so they agree with the adjusted labels
    feat_index = {(b, p, i): f for b, p, i, f in features}
    for b, p in sorted(by_page):
        keys = by_page[(b, p)]
        v = feat_index[keys[0]]
        for key in keys:
            step = steps[labels[key]]
            nxt = (key[0], key[1], key[2] + 1)
            v = [x + s + rng.gauss(0, 0.35) for x, s in zip(v, step)]
            feat_index[nxt][:] = v

    def pair_json(k):
        return {"book_id": k[0], "page_index": k[1], "first_panel_index": k[2], "second_panel_index": k[2] + 1}

    def dump(name, rows):
        with open(out / name, "w") as f:
            for r in rows:
                f.write(json.dumps(r, separators=(",", ":")) + "\n")

    dump("books.jsonl", books)
    dump("panels.jsonl", panels)
    dump("annotations.jsonl", [{"pair": pair_json(k), "annotator_id": "gt", "label": labels[k]} for k in gt_keys])
    dump("oracle.jsonl", [{"pair": pair_json(k), "annotator_id": "oracle", "label": labels[k]} for k in pairs])

    eval_keys = sorted(rng.sample(gt_keys, EVAL_PAIRS))
    raters = eval_annotators(rng, [labels[k] for k in eval_keys])
    rows = []
    for r in ("a1", "a2", "a3"):
        rows += [{"pair": pair_json(k), "annotator_id": r, "label": l} for k, l in zip(eval_keys, raters[r])]
    dump("agreement_eval.jsonl", rows)

    with open(out / "features.txt", "w") as f:
        f.write(f"dim={DIM}\n")
        for b, p, i, v in features:
            f.write(f"{b} {p} {i} " + " ".join(f"{x:.6g}" for x in v) + "\n")

    print(f"{len(books)} books, {len(panels)} panels, {len(pairs)} pairs, {len(gt_keys)} labeled")


if __name__ == "__main__":
    main()
