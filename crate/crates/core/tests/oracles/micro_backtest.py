"""Hand-rolled oracle for the 5-month micro backtest (window T = 2, one
characteristic, OLS policy, equally weighted benchmark).

Plain Python floats, no numpy. Writes micro_backtest.json next to this file.
"""
import json
import math
import os

MONTHS = [200001, 200002, 200003, 200004, 200005]
# month -> list of (firm, x, ret_fwd); None marks a missing characteristic.
PANEL = {
    200001: [("a", 1.0, 0.02), ("b", 2.0, -0.01), ("c", 4.0, 0.03)],
    200002: [("a", 1.5, 0.01), ("b", 0.5, 0.04), ("c", 3.0, -0.02), ("d", 2.0, 0.00)],
    200003: [("b", 1.0, -0.03), ("c", 2.5, 0.05), ("d", 0.0, 0.01)],
    200004: [("a", 2.0, -0.03), ("b", None, 0.01), ("c", 1.0, -0.04), ("d", 3.0, -0.02)],
    200005: [("a", 0.5, -0.02), ("c", 2.0, 0.06), ("d", 1.0, 0.01)],
}
WINDOW = 2
COSTS = [0.0, 0.001]
LIMITS = (0.01, 0.99)


def quantile7(sorted_vals, p):
    h = (len(sorted_vals) - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (h - lo) * (sorted_vals[hi] - sorted_vals[lo])


def standardize(vals):
    n = len(vals)
    m = sum(vals) / n
    c = [v - m for v in vals]
    sd = math.sqrt(sum(v * v for v in c) / (n - 1))
    return [v / sd for v in c]


def prepare(rows):
    present = [x for _, x, _ in rows if x is not None]
    s = sorted(present)
    lo, hi = quantile7(s, LIMITS[0]), quantile7(s, LIMITS[1])
    clipped = [None if x is None else min(max(x, lo), hi) for _, x, _ in rows]
    z = standardize([v for v in clipped if v is not None])
    it = iter(z)
    col = [0.0 if v is None else next(it) for v in clipped]
    if any(v is None for v in clipped):
        col = standardize(col)
    return col


def cov(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    return sum((x - ma) * (y - mb) for x, y in zip(a, b)) / (n - 1)


def metrics(r):
    n = len(r)
    mean = sum(r) / n
    sigma = math.sqrt(12.0 / n * sum((x - mean) ** 2 for x in r))
    wealth, peak, mdd = 1.0, 1.0, 0.0
    for x in r:
        wealth *= 1.0 + x
        peak = max(peak, wealth)
        mdd = max(mdd, (peak - wealth) / peak)
    s = sorted(r)
    rank = max(1, math.ceil(n * 0.01))
    return {
        "mean_monthly": mean,
        "annual_mean": 12 * mean,
        "sigma": sigma,
        "sharpe": 12 * mean / sigma,
        "max_drawdown": mdd,
        "var99": -s[rank - 1],
    }


def main():
    obs = []
    for m in MONTHS:
        rows = PANEL[m]
        x = prepare(rows)
        r = [ret for _, _, ret in rows]
        n = len(rows)
        obs.append({
            "firms": [f for f, _, _ in rows],
            "x": x,
            "r": r,
            "rb": sum(r) / n,
            "rc": sum(a * b for a, b in zip(x, r)) / n,
        })

    ledger = []
    drifted = None
    for t in range(WINDOW, len(MONTHS)):
        win = obs[t - WINDOW:t]
        rb = [o["rb"] for o in win]
        rc = [o["rc"] for o in win]
        theta = -cov(rb, rc) / cov(rc, rc)
        o = obs[t]
        n = len(o["firms"])
        w = [1.0 / n + xi * theta / n for xi in o["x"]]
        gross = sum(a * b for a, b in zip(w, o["r"]))
        if drifted is None:
            turnover = sum(abs(v) for v in w)
        else:
            firms = set(drifted) | set(o["firms"])
            new = dict(zip(o["firms"], w))
            turnover = sum(abs(new.get(f, 0.0) - drifted.get(f, 0.0)) for f in firms)
        drifted = {f: wi * (1.0 + ri) for f, wi, ri in zip(o["firms"], w, o["r"])}
        ledger.append({
            "month": MONTHS[t],
            "theta": theta,
            "firms": o["firms"],
            "weights": w,
            "gross": gross,
            "turnover": turnover,
            "net": [gross - c * turnover for c in COSTS],
            "benchmark_return": o["rb"],
            "predictor_return": o["rc"],
        })

    out = {
        "panel": {str(m): [[f, x, r] for f, x, r in PANEL[m]] for m in MONTHS},
        "window": WINDOW,
        "costs": COSTS,
        "ledger": ledger,
        "gross": metrics([row["gross"] for row in ledger]),
        "net": [metrics([row["net"][i] for row in ledger]) for i in range(len(COSTS))],
        "mean_turnover": sum(row["turnover"] for row in ledger) / len(ledger),
    }
    path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "micro_backtest.json")
    with open(path, "w") as fh:
        json.dump(out, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main()
