"""Run every casebook scenario and write one JSON report per scenario."""

import argparse
import json
from pathlib import Path

from rqpd.casebook import Options, list_scenarios, run_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("casebook-reports"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    statuses = {}
    for item in list_scenarios():
        rep = run_scenario(item["id"], Options(seed=args.seed))
        (args.out / f"{item['id']}.json").write_text(rep.to_json())
        statuses[item["id"]] = rep.status
        print(rep.summary())
    (args.out / "index.json").write_text(json.dumps(statuses, indent=2, sort_keys=True))
    return 0 if all(s == "pass" for s in statuses.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
