# You can set the number of workers by passing the 'workers' parameter.
# In this context, 'workers' is the number of images processed at the same time.
# Detected paths do not depend on it. A trained bank is bit-identical only between runs with the same worker count,
# because training merges one accumulator per worker.

import asyncio
from techzsky import TechZSky


async def main():
    sky = TechZSky(
        workers=4,  # Number of images processed concurrently
    )
    await sky.detect_dir("data/test", "bank.rdgl", out_dir="pred")


asyncio.run(main())
