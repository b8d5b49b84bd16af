# This script trains a filter bank and prints how many samples landed in each tensor bucket.
# Buckets with too few samples stay untrained and score 0 at detection time.
# The bank file can be reused by `detect` and by the `techzsky detect` command.

import asyncio
from techzsky import TechZSky
from techzsky.config import PipelineConfig


async def main():
    config = PipelineConfig().with_overrides(
        {
            "blade.side": 9,  # 9x9 filters instead of the default 7x7
            "seed": 3,  # Seed for negative sample selection
        }
    )
    sky = TechZSky(config)
    summary = await sky.train("data/train", out_bank="bank_9x9.rdgl")
    print(summary.format())


asyncio.run(main())
