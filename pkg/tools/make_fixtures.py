"""Regenerate the bundled CSV fixtures under fixtures/.

Deterministic (fixed seed).  The fixture is small enough to cross-check by
hand or spreadsheet: 40 systems rows (10 per suite), full micro sets, and
a two-branch lineage table.  Adjacent suites share 5 system_ids so overlap
joins have exactly 5 pairs.
"""

import csv
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "fixtures"

SUITE_MICROS = {
    1995: ["go", "m88ksim", "gcc", "compress", "li", "ijpeg", "perl", "vortex"],
    2000: ["gzip", "vpr", "gcc", "mcf", "crafty", "parser", "eon", "perl",
           "gap", "vortex", "bzip2", "twolf"],
    2006: ["perl", "bzip2", "gcc", "mcf", "gobmk", "hmmer", "sjeng",
           "libquantum", "h264ref", "omnetpp", "astar", "xalancbmk"],
    2017: ["perl", "gcc", "mcf", "omnetpp", "xalancbmk", "x264", "deepsjeng",
           "leela", "exchange2", "xz"],
}

# log-scale score offset per suite (distinct scales force normalization).
SUITE_OFFSET = {1995: 2.3, 2000: 6.9, 2006: 3.7, 2017: 2.1}

# month-index windows per suite
SUITE_MONTHS = {1995: (0, 52), 2000: (53, 130), 2006: (131, 260), 2017: (261, 300)}

# systems per suite: 5 shared with the previous suite, 5 new
SUITE_SYSTEMS = {
    1995: [f"a{i}" for i in range(1, 11)],
    2000: [f"a{i}" for i in range(1, 6)] + [f"b{i}" for i in range(1, 6)],
    2006: [f"b{i}" for i in range(1, 6)] + [f"c{i}" for i in range(1, 6)],
    2017: [f"c{i}" for i in range(1, 6)] + [f"d{i}" for i in range(1, 6)],
}


def month_str(idx):
    year, month = divmod(7 + idx, 12)
    return f"{1995 + year:04d}-{month + 1:02d}"


def main():
    rng = random.Random(20170801)
    OUT.mkdir(exist_ok=True)
    systems_rows = []
    micros_rows = []

    for suite in (1995, 2000, 2006, 2017):
        names = SUITE_MICROS[suite]
        lo, hi = SUITE_MONTHS[suite]
        for i, sysname in enumerate(SUITE_SYSTEMS[suite]):
            record_id = f"r{suite}_{i:02d}"
            date = lo + round((hi - lo) * i / 9)
            log_score = (SUITE_OFFSET[suite] + 0.004 * date
                         + rng.gauss(0.0, 0.10))
            score = round(math.exp(log_score), 4)

            cores = max(1, round(2 ** (date / 60) + rng.random()))
            freq = round(300 + 9.0 * date + rng.gauss(0, 40), 1)
            l3 = "" if suite == 1995 else round(1024 * (1 + date / 40), 1)
            tpc = 1 if suite in (1995, 2000) else rng.choice([1, 2])
            auto = 1 if (suite == 2017 or rng.random() < 0.4) else 0
            systems_rows.append([
                record_id, suite, month_str(date), "AcmeCorp",
                f"Model {sysname.upper()}", f"proc_{sysname}",
                cores, freq, l3, tpc, auto, "", score, round(score * 37.5, 2),
            ])

            # micro ratios whose geometric mean reproduces the score exactly
            # (log offsets centered to zero); libquantum gets 5x the spread.
            offsets = []
            for name in names:
                sd = 0.5 if name == "libquantum" else 0.1
                offsets.append(rng.gauss(0.0, sd))
            mean_off = sum(offsets) / len(offsets)
            for name, off in zip(names, offsets):
                ratio = score * math.exp(off - mean_off)
                micros_rows.append([record_id, name, repr(round(ratio, 6))])

    with open(OUT / "mini_spec.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "suite", "date", "vendor", "system",
                    "processor", "cores", "freq_mhz", "l3_kb",
                    "threads_per_core", "auto_parallel", "transistors",
                    "score_speed", "score_rate"])
        w.writerows(systems_rows)

    with open(OUT / "mini_micros.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["record_id", "micro_name", "ratio"])
        w.writerows(micros_rows)

    lineage = [
        # branch 1: three generations
        ("proc_d1", "fam1_g3", "fam1_g2"),
        ("proc_d2", "fam1_g3", "fam1_g2"),
        ("proc_c1", "fam1_g2", "fam1_g1"),
        ("proc_c2", "fam1_g2", "fam1_g1"),
        ("proc_b1", "fam1_g1", ""),
        ("proc_b2", "fam1_g1", ""),
        # branch 2: two generations
        ("proc_d3", "fam2_g2", "fam2_g1"),
        ("proc_d4", "fam2_g2", "fam2_g1"),
        ("proc_c3", "fam2_g1", ""),
        ("proc_c4", "fam2_g1", ""),
    ]
    with open(OUT / "mini_lineage.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["processor", "genus", "parent_genus"])
        w.writerows(lineage)

    print(f"wrote {len(systems_rows)} systems rows, {len(micros_rows)} micro rows")


if __name__ == "__main__":
    main()
