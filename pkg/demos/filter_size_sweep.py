# Trains one bank per filter size on the same split and compares the mean error.
# Small spreads between sizes mean the result is not sensitive to the filter size.

import asyncio
from techzsky import TechZSky
from techzsky.cli import format_sweep


async def main():
    sky = TechZSky(progress=False)
    reports = await sky.sweep("data/train", "data/test", sides=(7, 9, 11))
    print(format_sweep(reports))


asyncio.run(main())
