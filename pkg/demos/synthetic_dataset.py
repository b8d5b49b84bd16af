# Generates a reproducible synthetic dataset: sky gradient on top, textured terrain below,
# and a random-walk skyline between them. The same seed always gives the same files.
# The first `split` images go to train/, the rest to test/.

import asyncio
from techzsky import TechZSky


async def main():
    sky = TechZSky()
    summary = await sky.synth(count=50, size=256, seed=7, out_dir="data", split=25)
    print(f"{summary.count} images written to {summary.out_dir}")


asyncio.run(main())
