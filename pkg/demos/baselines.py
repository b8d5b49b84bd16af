# The two non-learning baselines need no filter bank.
# "edges" walks the Canny edge map only, "gradient" uses the gradient magnitude everywhere.
# Comparing them with the learned detector shows what the filter bank adds.

import asyncio
from techzsky import TechZSky


async def main():
    sky = TechZSky()
    summary = await sky.train("data/train")

    await sky.detect_dir("data/test", summary.bank, out_dir="pred/proposed")
    for method in ("edges", "gradient"):
        await sky.baseline_dir(method, "data/test", out_dir=f"pred/{method}")

    for name in ("proposed", "edges", "gradient"):
        report = await sky.evaluate(f"pred/{name}", "data/test")
        print(f"{name:>10}: mean {report.mean:.3f} px, std {report.std:.3f} px")


asyncio.run(main())
