# This script demonstrates how to monitor batch progress by providing a custom callback function.
# By setting the 'progress_callback' parameter, the provided function will be called periodically with the current progress.
# This will disable the default progress bar and you can use your own progress bar or any other progress indicator.
# The callback can be a normal function or a coroutine function.


import asyncio
from techzsky import TechZSky


def progress_callback(description, done, total, arg1, arg2):
    print(f"{description}: {done}/{total} images", arg1, arg2)


async def main():
    sky = TechZSky(
        progress_callback=progress_callback,  # Custom progress callback function
        progress_args=(
            "arg1",
            "arg2",
        ),  # Additional arguments to pass to the callback function
        progress_interval=0.5,  # Interval in seconds for calling the progress callback
    )
    await sky.detect_dir("data/test", "bank.rdgl", out_dir="pred")


asyncio.run(main())
