#!/usr/bin/env python3
"""Write offline census payloads for Taylor County, TX (state 48, county 441).

Each file is a Data Profile API response body (JSON array of arrays) stored
under the name the client computes for that request, so the pipeline can
run with no network access. Values are rounded county-scale estimates.

usage: make_taylor_fixture.py [OUT_DIR]
"""
import hashlib
import json
import pathlib
import sys

YEAR, STATE, COUNTY = 2023, "48", "441"


def codes(table, lo, hi):
    return [f"{table}_{n:04d}E" for n in range(lo, hi + 1)]


def dp(table, *nums):
    return [f"{table}_{n:04d}E" for n in nums]


VALUES = {}


def put(code_list, nums):
    assert len(code_list) == len(nums), code_list
    VALUES.update(zip(code_list, nums))


put(dp("DP05", 1, 2, 3), [143937, 71500, 72437])
put(codes("DP05", 5, 17),
    [9900, 9700, 9500, 11200, 12900, 20300, 18300, 15200, 7900, 8100, 12000, 6500, 2437])
put(dp("DP05", 37, 38, 39, 44, 45, 46, 47, 48, 49, 50, 52, 53, 54, 55, 57, 58),
    [107000, 10600, 900, 700, 300, 500, 100, 250, 300, 600, 60, 20, 40, 80, 5500, 16987])
put(dp("DP05", 76, 81), [35500, 108437])
put(dp("DP05", 18), [33.4])
put(codes("DP05", 69, 74), [118500, 13200, 2900, 3400, 300, 12000])

put(dp("DP02", 1, 16), [52000, 2.58])
put(codes("DP02", 26, 30), [20500, 26000, 900, 1600, 5800])
put(codes("DP02", 32, 36), [17600, 25500, 1400, 5700, 7300])
put(dp("DP02", 58), [14500])
put(codes("DP02", 60, 66), [3300, 6000, 25500, 21500, 6900, 15700, 7500])
put(dp("DP02", 91, 92, 93, 96, 97), [100000, 35000, 1600, 3100, 4237])
put(dp("DP02", 113, 116, 118, 120, 122), [112000, 19000, 1400, 1100, 537])
put(dp("DP02", 153), [47600])

put(codes("DP03", 5, 8), [3100, 2900, 43000, 67100])
put(codes("DP03", 33, 45),
    [1900, 5200, 3700, 1400, 7600, 3600, 800, 3700, 4500, 17300, 7300, 3200, 3800])
put(codes("DP03", 52, 61), [3400, 2600, 4900, 5000, 6900, 9400, 6600, 7400, 2900, 2900])
put(dp("DP03", 62, 88), [60500, 31200])

put(dp("DP04", 45, 46, 47), [52000, 30000, 22000])
put(codes("DP04", 58, 61), [3300, 18700, 19500, 10500])
put(codes("DP04", 81, 88), [3000, 5100, 5600, 5200, 6100, 3600, 1100, 300])
put(dp("DP04", 89), [168000])
put(codes("DP04", 127, 133), [1900, 9600, 6200, 1700, 400, 100, 100])
put(dp("DP04", 134, 135), [1010, 2000])

# One request per marginal table, then one per profile group, in client order.
REQUESTS = [
    codes("DP05", 5, 17),
    codes("DP05", 2, 3),
    dp("DP05", 37, 38, 39, 44, 45, 46, 47, 48, 49, 50, 52, 53, 54, 55, 57, 58),
    dp("DP05", 76, 81),
    dp("DP02", 91, 92, 93, 96, 97),
    dp("DP02", 113, 116, 118, 120, 122),
    codes("DP03", 33, 45) + codes("DP03", 5, 7),
    codes("DP03", 52, 61),
    codes("DP04", 81, 88) + codes("DP04", 127, 133) + dp("DP04", 135),
    codes("DP04", 58, 61),
    codes("DP02", 26, 30),
    codes("DP02", 32, 36),
    codes("DP02", 60, 66),
    ["DP02_0058E", "DP05_0008E", "DP05_0009E"],
    dp("DP05", 1, 2, 3, 18, 69, 70, 71, 72, 73, 74, 76, 81),
    dp("DP02", 1, 16) + codes("DP02", 60, 66) + dp("DP02", 153),
    dp("DP03", 8) + codes("DP03", 33, 45) + dp("DP03", 6, 62, 88),
    dp("DP04", 45, 46, 47, 89, 134),
]


def fmt(v):
    return str(v) if isinstance(v, int) else repr(v)


def main():
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else
                       pathlib.Path(__file__).resolve().parent.parent / "crates/core/fixtures/census")
    out.mkdir(parents=True, exist_ok=True)
    for req in REQUESTS:
        canonical = f"acs5/profile|{YEAR}|{STATE}|{COUNTY}|{','.join(req)}"
        digest = hashlib.sha256(canonical.encode()).hexdigest()[:16]
        name = f"acs5_profile_{YEAR}_{STATE}{COUNTY}_{digest}.json"
        body = [req + ["state", "county"], [fmt(VALUES[c]) for c in req] + [STATE, COUNTY]]
        (out / name).write_text(json.dumps(body, separators=(",", ":")))
        print(name)


if __name__ == "__main__":
    main()
