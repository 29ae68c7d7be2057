"""Shared fixtures and the acceptance-criteria summary printer."""

CRITERIA = {
    1: "gradient fidelity <= 1e-4 for every layer kind and loss",
    2: "overfit sanity: 100% train accuracy on 20 sim samples",
    3: "reflection symmetry: mirrored histogram, doubled size",
    4: "crop/scale: 480x640 -> 220x400 crop -> 100x200",
    5: "k-means bound: <= K colors, K=2 matches golden",
    6: "PID + Ziegler-Nichols holds wall distance within 0.1 m",
    7: "imbalance collapse and inverse-weighting mitigation",
    8: "closed loop: trained CNN completes the rectangle loop",
    9: "synchronization slop bound and dataset round-trip",
    10: "sensor consistency: camera depth equals 0-degree LIDAR",
    11: "inverse-frequency weights: dataset-mean weight is 1",
    12: "autoencoder bottleneck 10, loss decreases, GRU order-sensitive",
}

_passed: set[int] = set()
_seen: set[int] = set()


def mark_started(n: int):
    _seen.add(n)


def mark_passed(n: int):
    _passed.add(n)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _seen:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for n in sorted(_seen):
        status = "PASS" if n in _passed else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}: {CRITERIA[n]}")
