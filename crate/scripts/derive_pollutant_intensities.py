#!/usr/bin/env python3
"""Generator emission intensities (short tons per MWh) for project configs.

Permitted annual limits for Northern Virginia data center backup generators,
scaled by the share assumed actually emitted, divided by the annual energy of
the region's data centers. Paste the output under [project.pollutant_intensities].

usage: derive_pollutant_intensities.py [REGIONAL_MWH] [ACTUAL_SHARE]
"""
import sys

PERMITTED_TONS = {"NOx": 13_000, "VOCs": 1_400, "PM2.5": 600, "SO2": 50}

regional_mwh = float(sys.argv[1]) if len(sys.argv) > 1 else 33_851_000.0
share = float(sys.argv[2]) if len(sys.argv) > 2 else 0.10

for name, tons in PERMITTED_TONS.items():
    print(f'"{name}" = {tons * share / regional_mwh:.6e}')
