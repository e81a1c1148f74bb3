"""Independent reference implementation of the text metrics.

Writes metric_cases.json, which the C++ tests read as frozen expected values.
Rational arithmetic is used wherever the formulas allow it. When nltk and
rouge-score are installed the script also cross-checks the cases where their
definitions coincide with ours.

    python3 tests/oracle/metrics_oracle.py
"""

import json
import math
import string
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path

EPS = 1e-9

PAIRS = [
    ("cat_mat", "the cat sat on the mat", "the cat is on the mat"),
    ("identity_long", "the quick brown fox jumps over the lazy dog", "the quick brown fox jumps over the lazy dog"),
    ("identity_two", "hello world", "hello world"),
    ("identity_one", "seven", "seven"),
    ("disjoint", "apples and pears", "seven blue whales"),
    ("case_punct", "Hello, World! How are you?", "hello world how are you"),
    ("short_candidate", "the cat", "the cat sat on the mat"),
    ("long_candidate", "the cat sat on the red mat near the door", "the cat sat on the mat"),
    ("repeat_clip", "the the the the the the the", "the cat is on the mat"),
    ("reordered", "mat the on sat cat the", "the cat sat on the mat"),
    ("swap_halves", "on the mat the cat sat", "the cat sat on the mat"),
    ("one_shared", "a dog ran", "the cat ran"),
    ("two_of_four", "a b c d", "a b e f"),
    ("math_step", "so we need 18 times 2 bottles", "we need 18 times 2 which is 36 bottles"),
    ("math_question", "what do you get when you multiply 4 by 12", "what is 4 times 12"),
    ("tutor_a", "can you tell me what the problem is asking", "what is the problem asking you to find"),
    ("tutor_b", "great job now how many are left", "nice work how many muffins are left now"),
    ("interleaved", "x a y b z c", "a b c"),
    ("gapped_reference", "a b c", "a x b y c z"),
    ("duplicate_ref", "the cat the cat", "the cat"),
    ("single_vs_many", "yes", "yes that is correct"),
    ("many_vs_single", "yes that is correct", "yes"),
    ("contractions", "let's check: don't rush!", "lets check dont rush"),
    ("numbers", "it costs $7.50 for each of 4 tickets", "4 tickets cost 30 dollars"),
    ("near_identity", "the cat sat on the mat today", "the cat sat on the mat"),
]


def tokenize(text):
    table = str.maketrans("", "", string.punctuation)
    return text.lower().translate(table).split()


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def clipped(c, r):
    return sum(min(k, r[g]) for g, k in c.items())


def bleu(c, r, n):
    logs = 0.0
    for k in range(1, n + 1):
        cg, rg = ngrams(c, k), ngrams(r, k)
        denom = sum(cg.values())
        if denom == 0:
            p = Fraction(1) if not rg else Fraction(0)
        else:
            p = Fraction(clipped(cg, rg), denom)
        logs += math.log(float(p)) if p > 0 else math.log(EPS)
    bp = min(1.0, math.exp(1 - len(r) / len(c)))
    return bp * math.exp(logs / n)


def rouge_n(c, r, n, mode):
    cg, rg = ngrams(c, n), ngrams(r, n)
    ct, rt = sum(cg.values()), sum(rg.values())
    if ct == 0 or rt == 0:
        return 1.0 if ct == rt == 0 else 0.0
    o = clipped(cg, rg)
    rec, prec = Fraction(o, rt), Fraction(o, ct)
    if mode == "recall":
        return float(rec)
    return 0.0 if o == 0 else float(2 * prec * rec / (prec + rec))


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            table[i][j] = table[i - 1][j - 1] + 1 if a[i - 1] == b[j - 1] else max(table[i - 1][j], table[i][j - 1])
    return table[-1][-1]


def rouge_l(c, r, mode):
    l = lcs(c, r)
    rec, prec = Fraction(l, len(r)), Fraction(l, len(c))
    if mode == "recall":
        return float(rec)
    return 0.0 if l == 0 else float(2 * prec * rec / (prec + rec))


def meteor(c, r):
    used = [False] * len(r)
    align = []
    for tok in c:
        hit = None
        for j, ref_tok in enumerate(r):
            if not used[j] and ref_tok == tok:
                used[j] = True
                hit = j
                break
        align.append(hit)
    m = sum(1 for a in align if a is not None)
    if m == 0:
        return 0.0
    chunks, prev = 0, None
    for a in align:
        if a is None:
            prev = None
            continue
        if prev is None or a != prev + 1:
            chunks += 1
        prev = a
    p, rc = Fraction(m, len(c)), Fraction(m, len(r))
    fmean = 10 * p * rc / (rc + 9 * p)
    penalty = Fraction(1, 2) * Fraction(chunks, m) ** 3
    return float(fmean * (1 - penalty))


def embed_f1_one_hot(c, r):
    # one-hot vectors: cosine is 1 for equal tokens, 0 otherwise
    rs, cs = set(r), set(c)
    rec = Fraction(sum(1 for t in r if t in cs), len(r))
    prec = Fraction(sum(1 for t in c if t in rs), len(c))
    return 0.0 if rec + prec == 0 else float(2 * prec * rec / (prec + rec))


def score(cand, ref):
    c, r = tokenize(cand), tokenize(ref)
    return {
        "bleu_1": bleu(c, r, 1), "bleu_2": bleu(c, r, 2), "bleu_3": bleu(c, r, 3), "bleu_4": bleu(c, r, 4),
        "meteor": meteor(c, r),
        "rouge_1": rouge_n(c, r, 1, "recall"), "rouge_2": rouge_n(c, r, 2, "recall"),
        "rouge_l": rouge_l(c, r, "recall"),
        "rouge_1_f1": rouge_n(c, r, 1, "f1"), "rouge_2_f1": rouge_n(c, r, 2, "f1"),
        "rouge_l_f1": rouge_l(c, r, "f1"),
        "embed_f1": embed_f1_one_hot(c, r),
    }


def hand_checks(cases):
    cm = cases["cat_mat"]
    assert abs(cm["bleu_1"] - 5 / 6) < 1e-12
    assert abs(cm["bleu_2"] - math.sqrt(5 / 6 * 3 / 5)) < 1e-12
    assert abs(cm["bleu_3"] - (5 / 6 * 3 / 5 * 1 / 4) ** (1 / 3)) < 1e-12
    assert abs(cm["bleu_4"] - (5 / 6 * 3 / 5 * 1 / 4 * EPS) ** 0.25) < 1e-15
    assert abs(cm["rouge_l_f1"] - 5 / 6) < 1e-12
    assert abs(cm["meteor"] - 5 / 6 * (1 - 0.5 * (2 / 5) ** 3)) < 1e-12
    assert abs(cases["two_of_four"]["embed_f1"] - 0.5) < 1e-12
    for name in ("identity_long", "identity_two", "identity_one"):
        m = len(tokenize(dict((p[0], p[1]) for p in PAIRS)[name]))
        assert abs(cases[name]["meteor"] - (1 - 0.5 / m ** 3)) < 1e-12
    assert all(v == 0.0 for k, v in cases["disjoint"].items() if k != "bleu_1" and not k.startswith("bleu"))


def cross_check(cases):
    try:
        from nltk.translate.bleu_score import sentence_bleu
    except ImportError:
        print("nltk not installed; skipping BLEU cross-check", file=sys.stderr)
    else:
        for name, cand, ref in PAIRS:
            c, r = tokenize(cand), tokenize(ref)
            for n in range(1, 5):
                if len(c) < n or len(r) < n:
                    continue
                if any(clipped(ngrams(c, k), ngrams(r, k)) == 0 for k in range(1, n + 1)):
                    continue  # nltk returns 0 where we smooth
                w = tuple([1.0 / n] * n)
                theirs = sentence_bleu([r], c, weights=w)
                ours = cases[name][f"bleu_{n}"]
                assert abs(theirs - ours) < 1e-9, (name, n, theirs, ours)
    try:
        from rouge_score import rouge_scorer
    except ImportError:
        print("rouge-score not installed; skipping ROUGE cross-check", file=sys.stderr)
    else:
        scorer = rouge_scorer.RougeScorer(["rouge1", "rouge2", "rougeL"])
        for name, cand, ref in PAIRS:
            c, r = tokenize(cand), tokenize(ref)
            if len(c) < 2 or len(r) < 2 or any(not t.isascii() or not t.isalnum() for t in c + r):
                continue
            s = scorer.score(" ".join(r), " ".join(c))
            for key, ours in (("rouge1", "rouge_1"), ("rouge2", "rouge_2"), ("rougeL", "rouge_l")):
                assert abs(s[key].recall - cases[name][ours]) < 1e-9, (name, key)
                assert abs(s[key].fmeasure - cases[name][ours + "_f1"]) < 1e-9, (name, key)


def main():
    cases = {name: score(c, r) for name, c, r in PAIRS}
    hand_checks(cases)
    cross_check(cases)
    out = [{"name": n, "candidate": c, "reference": r, "expected": cases[n]} for n, c, r in PAIRS]
    path = Path(__file__).with_name("metric_cases.json")
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(f"wrote {len(out)} cases to {path}")


if __name__ == "__main__":
    main()
