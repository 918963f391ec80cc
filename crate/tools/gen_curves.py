"""Build a curve fixture (minimal models, conductor, analytic rank) with PARI.

Searches reduced Weierstrass models [a1,a2,a3,a4,a6] with a1,a3 in {0,1},
a2 in {-1,0,1} over a coefficient box, keeps minimal non-CM models whose
conductor is at most --max-conductor, closes the result under isogeny and
writes the ingestion CSV (label, conductor, rank, w1, w2, w3, w4, w6).

Requires the `cypari` wheel (`pip install cypari`).
"""
import argparse
import csv
import sys

import numpy as np
import cypari

pari = cypari.pari
pari.allocatemem(64 * 10**6, 1024 * 10**6, silent=True)
CM_J = {0, 1728, -3375, 8000, -32768, 54000, 287496, -884736, -12288000,
        16581375, -884736000, -147197952000, -262537412640768000}


def primes_upto(n):
    s = np.ones(n + 1, dtype=bool)
    s[:2] = False
    for i in range(2, int(n ** 0.5) + 1):
        if s[i]:
            s[i * i::i] = False
    return np.nonzero(s)[0]


def smooth_mask(delta, primes, bound):
    r = np.abs(delta).copy()
    r[r == 0] = 1 << 62
    rad = np.ones_like(r)
    for p in primes:
        m = (r % p) == 0
        if not m.any():
            continue
        idx = np.nonzero(m)[0]
        rad[idx] *= p
        sub = r[idx]
        while True:
            d = (sub % p) == 0
            if not d.any():
                break
            sub[d] //= p
        r[idx] = sub
    return (r == 1) & (rad <= bound) & (delta != 0)


def canonical(ai):
    e = pari.ellinit(ai)
    m = e.ellminimalmodel()[0]
    return [int(m[i]) for i in range(5)]


def record(ai, bound):
    e = pari.ellinit(ai)
    if int(pari.denominator(e[12])) == 1 and int(e[12]) in CM_J:
        return None
    n = int(e.ellglobalred()[0])
    if n > bound:
        return None
    return n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-conductor", type=int, default=3000)
    ap.add_argument("--a4", type=int, default=300)
    ap.add_argument("--a6", type=int, default=3000)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()
    bound = args.max_conductor
    primes = primes_upto(bound)
    a6 = np.arange(-args.a6, args.a6 + 1, dtype=np.int64)
    found = {}
    for a1 in (0, 1):
        for a3 in (0, 1):
            for a2 in (-1, 0, 1):
                for a4 in range(-args.a4, args.a4 + 1):
                    b2 = a1 * a1 + 4 * a2
                    b4 = 2 * a4 + a1 * a3
                    b6 = a3 * a3 + 4 * a6
                    b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
                    delta = -b2 * b2 * b8 - 8 * b4 ** 3 - 27 * b6 * b6 + 9 * b2 * b4 * b6
                    for w6 in a6[smooth_mask(delta, primes, bound)]:
                        ai = [a1, a2, a3, a4, int(w6)]
                        if canonical(ai) != ai:
                            continue
                        n = record(ai, bound)
                        if n is not None:
                            found[tuple(ai)] = n
            print(f"a1={a1} a3={a3}: {len(found)}", file=sys.stderr)
    # isogeny closure
    queue = list(found)
    while queue:
        ai = queue.pop()
        e = pari.ellinit(list(ai))
        curves = e.ellisomat(0, 1)[0]
        for c in curves:
            m = tuple(canonical([c[0], c[1]]))
            if m not in found:
                found[m] = found[ai]
                queue.append(m)
    print(f"after isogeny closure: {len(found)}", file=sys.stderr)
    rows = []
    for ai, n in found.items():
        e = pari.ellinit(list(ai))
        rank = int(e.ellanalyticrank()[0])
        rows.append((n, ai, rank))
    rows.sort()
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["label", "conductor", "rank", "w1", "w2", "w3", "w4", "w6"])
    counter = {}
    for n, ai, rank in rows:
        k = counter.get(n, 0) + 1
        counter[n] = k
        w.writerow([f"{n}.s{k}", n, rank, *ai])


if __name__ == "__main__":
    main()
