# Setting 'debug' to False will disable info logs, warnings and errors are still shown.
# Setting 'progress' to False will disable the tqdm progress bar, which is useful in automated scripts or background jobs.
# Adding custom progress_callback will still work

import asyncio
from techzsky import TechZSky


async def main():
    sky = TechZSky(
        debug=False,  # Disable info logs
        progress=False,  # Disable progress display
    )
    report = await sky.evaluate("pred", "data/test", out_json="report.json")
    print(report.format_table())


asyncio.run(main())
