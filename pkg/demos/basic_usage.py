# This is a demo script to illustrate how to use the TechZSky library to detect a mountain skyline.
# It expects a dataset made with `techzsky synth --count 50 --size 256 --seed 7 --split 25 --out data`.

import asyncio
from techzsky import TechZSky


async def main():
    # Initialize the detector with default settings
    sky = TechZSky()

    # Learn a filter bank from the training images and their ground-truth skylines
    summary = await sky.train("data/train", out_bank="bank.rdgl")

    # Detect the skyline of one test image, writing the path CSV and an overlay PNG
    result = await sky.detect(
        "data/test/synth_0025.png",
        summary.bank,
        out_csv="synth_0025.csv",
        overlay="synth_0025_overlay.png",
    )
    print(f"cost: {result.total_cost:.4f}, first rows: {result.path.rows[:8]}")


# Run the main function using asyncio
asyncio.run(main())
