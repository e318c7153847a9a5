"""Regenerates metric_pairs.json: 20 candidate/reference pairs with expected
scores from a direct Python implementation of each metric."""
import json
import math
from collections import Counter

PAIRS = [
    ("the cat sat on the mat", ["the cat sat on the mat"]),
    ("the cat sat", ["the cat sat down"]),
    ("a b c", ["a c b"]),
    ("there are two chairs next to the table", ["two chairs are beside the table", "there are 2 chairs"]),
    ("Brown", ["brown."]),
    ("3 chairs", ["3"]),
    ("the lamp is on the left side of the room", ["a lamp stands on the left of the room"]),
    ("running dogs jumped quickly", ["the dog runs and jumps quick"]),
    ("a well-lit room with a wooden table", ["a bright room with a wood table", "well-lit room, wooden table"]),
    ("the the the the", ["the cat is on the mat"]),
    ("red chair blue chair red chair", ["a red chair and a blue chair"]),
    ("walk to the table and sit down", ["go to the table", "sit down at the table"]),
    ("white", ["white", "off-white"]),
    ("the sofa faces the television near the window", ["the couch faces the tv by the window"]),
    ("dark blue", ["navy", "dark blue"]),
    ("a small room containing a table and three chairs", ["a room with a table and three chairs around it"]),
    ("pick up the cup then place it in the sink", ["pick up the cup", "place the cup in the sink"]),
    ("nothing in common here", ["completely different words"]),
    ("the chairs are tucked under the table", ["chairs tucked under a table", "the chair is under the table"]),
    ("an empty kitchen with white cabinets and a steel sink", ["a kitchen with white cabinets", "a steel sink in an empty kitchen"]),
]


def normalize(text):
    lower = text.lower()
    out = []
    for i, c in enumerate(lower):
        if c.isalnum():
            out.append(c)
        elif c == "-":
            before = i > 0 and lower[i - 1].isalnum()
            after = i + 1 < len(lower) and lower[i + 1].isalnum()
            if before and after:
                out.append(c)
        elif c.isspace():
            out.append(" ")
    return "".join(out).split()


def stem(w):
    for suf in ["ing", "ed", "es", "ly", "s"]:
        if w.endswith(suf) and len(w) - len(suf) >= 3:
            return w[: -len(suf)]
    return w


def ngrams(toks, n):
    return Counter(tuple(toks[i : i + n]) for i in range(len(toks) - n + 1))


def bleu(cand, refs, max_n):
    c = normalize(cand)
    rs = [normalize(r) for r in refs]
    logs = 0.0
    for n in range(1, max_n + 1):
        cc = ngrams(c, n)
        total = sum(cc.values())
        if total == 0:
            return 0.0
        clipped = sum(min(k, max(ngrams(r, n)[g] for r in rs)) for g, k in cc.items())
        if clipped == 0:
            return 0.0
        logs += math.log(clipped / total)
    r = min((len(x) for x in rs), key=lambda l: (abs(l - len(c)), l))
    bp = math.exp(1 - r / len(c)) if len(c) < r else 1.0
    return bp * math.exp(logs / max_n)


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def rouge_l(cand, refs):
    c = normalize(cand)
    best = 0.0
    for r in refs:
        r = normalize(r)
        l = lcs(c, r)
        if l == 0:
            continue
        p, rec, b2 = l / len(c), l / len(r), 1.2 ** 2
        best = max(best, (1 + b2) * p * rec / (rec + b2 * p))
    return best


def align(c, r):
    cu, ru, pairs = [False] * len(c), [False] * len(r), []
    for key in (lambda w: w, stem):
        for i, w in enumerate(c):
            if cu[i]:
                continue
            for j, v in enumerate(r):
                if not ru[j] and key(v) == key(w):
                    cu[i] = ru[j] = True
                    pairs.append((i, j))
                    break
    return sorted(pairs)


def meteor(cand, refs):
    c = normalize(cand)
    best = 0.0
    for r in refs:
        r = normalize(r)
        pairs = align(c, r)
        m = len(pairs)
        if m == 0:
            continue
        chunks = 1 + sum(1 for a, b in zip(pairs, pairs[1:]) if not (b[0] == a[0] + 1 and b[1] == a[1] + 1))
        p, rec = m / len(c), m / len(r)
        f = 10 * p * rec / (rec + 9 * p)
        best = max(best, f * (1 - 0.5 * (chunks / m) ** 3))
    return best


def em(cand, refs):
    return 1.0 if any(normalize(r) == normalize(cand) for r in refs) else 0.0


def cider(cands, refss):
    st = lambda s: [stem(w) for w in normalize(s)]
    refs = [[st(r) for r in rs] for rs in refss]
    df = Counter()
    for rs in refs:
        seen = set()
        for r in rs:
            for n in range(1, 5):
                seen |= set(ngrams(r, n))
        df.update(seen)
    N = len(cands)

    def vec(toks, n):
        return {g: k * (math.log(N) - math.log(max(1, df[g]))) for g, k in ngrams(toks, n).items()}

    out = []
    for cand, rs in zip(cands, refs):
        c = st(cand)
        total = 0.0
        for n in range(1, 5):
            hv = vec(c, n)
            hn = math.sqrt(sum(x * x for x in hv.values()))
            acc = 0.0
            for r in rs:
                rv = vec(r, n)
                rn = math.sqrt(sum(x * x for x in rv.values()))
                if hn == 0 or rn == 0:
                    continue
                dot = sum(min(h, rv[g]) * rv[g] for g, h in hv.items() if g in rv)
                pen = math.exp(-((len(c) - len(r)) ** 2) / (2 * 36.0))
                acc += pen * dot / (hn * rn)
            total += acc / len(rs)
        out.append(10 * total / 4)
    return out


def main():
    ci = cider([c for c, _ in PAIRS], [r for _, r in PAIRS])
    items = []
    for (c, r), cd in zip(PAIRS, ci):
        items.append(
            {
                "candidate": c,
                "references": r,
                "bleu1": bleu(c, r, 1),
                "bleu4": bleu(c, r, 4),
                "rouge_l": rouge_l(c, r),
                "meteor": meteor(c, r),
                "cider_d": cd,
                "em": em(c, r),
            }
        )
    with open(__file__.replace("gen_metric_pairs.py", "metric_pairs.json"), "w") as f:
        json.dump(items, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
