#!/usr/bin/env python3
"""Fit the cost-model constants to the published migration-time table and
write the result to configs/calibrated_default.json, printing residuals.

The shipped CostModelConfig defaults must stay byte-identical to this
output; tests/test_bench.py enforces that.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from crossmig.bench import CalibrationTargets, calibrate  # noqa: E402


def main() -> int:
    out = Path(__file__).resolve().parent.parent / "configs" / "calibrated_default.json"
    out.parent.mkdir(exist_ok=True)
    config, residuals = calibrate(CalibrationTargets())
    config.save(out)
    for name, value in sorted(residuals.items()):
        print(f"{name:>45}: {value:+.3%}")
    print(f"worst residual: {max(abs(v) for v in residuals.values()):.3%}")
    print(f"written: {out}")
    print()
    print(config.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
