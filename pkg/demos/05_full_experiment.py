"""
The full experiment on the toy corpus
=====================================

Runs the bundled configuration end to end and prints the summary, the
trend checks and a coarse text rendering of the event-level histograms.
Output goes to ``runs/toy`` next to this file.
"""

import csv
from collections import defaultdict
from pathlib import Path

from typicality.corpus import dump_jsonl, generate_toy_corpus
from typicality.experiment import compare_conditions, load_config, run_experiment

here = Path(__file__).resolve().parent
out = here / "runs" / "toy"
out.mkdir(parents=True, exist_ok=True)
corpus_path = out / "toy_corpus.jsonl"
dump_jsonl(generate_toy_corpus(), corpus_path)

config = load_config(here.parent / "configs" / "toy.cfg", corpus=str(corpus_path), out=str(out))
bundle = run_experiment(config)
print(f"Reference E[ID] = {bundle.expected_id:.3f} +/- {bundle.expected_id_se:.3f} nats")

trends = compare_conditions(bundle)
for step in trends["stdev_trend"]["steps"]:
    print(f"stdev  {step['from']:>13} -> {step['to']:<12} {step['stdev_from']:.3f} -> {step['stdev_to']:.3f}")
for step in trends["id_trend"]["steps"]:
    print(f"mean ID {step['from']:>12} -> {step['to']:<12} {step['mean_from']:.3f} -> "
          f"{step['mean_to']:.3f}  ({step['margin_over_se']:.1f} SE)")
for label, p in trends["proximity"]["by_tau"].items():
    print(f"W1 to Reference: Conventional {p['w1_conventional']:.3f}, {label} {p['w1_typical']:.3f}")

# hist_events.csv has one row per bin and series. The shared bins stretch to
# cover rare outliers, so show only bins where some series has at least 0.5%
# of its events, merged to fit a terminal line.
series = defaultdict(list)
with open(out / "hist_events.csv") as fh:
    for row in csv.DictReader(fh):
        series[row["series"]].append(int(row["count"]))
busy = [i for i in range(len(series["Reference"]))
        if any(c[i] >= 0.005 * sum(c) for c in series.values())]
lo, hi = busy[0], busy[-1] + 1
group = max(1, (hi - lo) // 60)
shades = " .:-=+*#%@"
for label, counts in series.items():
    merged = [sum(counts[i:i + group]) for i in range(lo, hi, group)]
    peak = max(merged)
    print(f"{label:>13} |" + "".join(shades[min(9, round(9 * c / peak))] for c in merged) + "|")
