# Name: techzsky
# Version: 1.0.0
# Summary: Shallow-learning mountain skyline detection with learned filter banks and dynamic programming
# Home-page: https://github.com/TechShreyash/techzsky
# Author: TechShreyash
# Author-email: techshreyash123@gmail.com
# License: MIT

import aiofiles
import asyncio
import inspect
import time
from contextlib import contextmanager
from dataclasses import dataclass
from tqdm import tqdm
from pathlib import Path
from techzsky.blade import (
    FilterBank,
    GramAccumulator,
    PixelContext,
    SampleBatch,
    collect_sample_batch,
    merge,
    predict,
    solve_bank,
)
from techzsky.config import PipelineConfig
from techzsky.dp import (
    CostGrid,
    SkylinePath,
    cost_edges_only,
    cost_gradient,
    cost_proposed,
    gap_fill,
    path_costs,
    shortest_path,
)
from techzsky.edges import canny_with
from techzsky.errors import (
    MalformedGroundTruth,
    MissingDirectory,
    NoMatchedPairs,
    NoTrainingPairs,
    PipelineBusy,
    UnknownMethod,
)
from techzsky.evaluate import (
    EvalReport,
    GroundTruth,
    aggregate,
    average_absolute_error,
    load_dataset,
    read_ground_truth,
    segmentation_accuracy,
)
from techzsky.extra import (
    StageTimer,
    as_path,
    get_random_string,
    list_images,
    pair_by_stem,
)
from techzsky.imagecore import (
    RgbImage,
    decode_image,
    encode_png,
    normalize01,
    overlay_rows,
    to_grayscale,
)
from techzsky.logger import Logger
from techzsky.synth import SynthSummary, synth_generate
from techzsky.tensor import TensorConfig
from typing import Callable, Any, Dict, Iterator, Union, Awaitable, Optional, List, Sequence, Tuple

BASELINE_METHODS = ("edges", "gradient")

PathLike = Union[str, Path]


@dataclass
class DetectionResult:
    path: SkylinePath
    costs: List[float]
    total_cost: float
    timings: Dict[str, float]
    wall_ms: float

    @property
    def truth(self) -> GroundTruth:
        return GroundTruth.from_path(self.path)


@dataclass
class TrainingSummary:
    bank: FilterBank
    bucket_counts: List[int]
    samples: int
    images: int
    bank_path: Optional[Path] = None

    @property
    def untrained(self) -> int:
        return self.bank.bucket_count - self.bank.trained_count

    def format(self) -> str:
        lines = [
            f"images: {self.images}  samples: {self.samples}",
            f"buckets: {self.bank.bucket_count}  trained: {self.bank.trained_count}  untrained: {self.untrained}",
            "per-bucket sample counts:",
        ]
        counts = self.bucket_counts
        for start in range(0, len(counts), 16):
            chunk = " ".join(f"{c:5d}" for c in counts[start : start + 16])
            lines.append(f"  [{start:3d}] {chunk}")
        return "\n".join(lines)


class TechZSky:
    def __init__(
        self,
        config: Optional[PipelineConfig] = None,
        workers: Optional[int] = None,
        debug: bool = True,
        progress: bool = True,
        progress_callback: Optional[
            Union[Callable[..., Any], Callable[..., Awaitable[Any]]]
        ] = None,
        progress_args: tuple = (),
        progress_interval: float = 1,
    ) -> None:
        """
        Initialize the TechZSky object.

        #### Args:
            - `config` `(Optional[PipelineConfig], optional)`: Pipeline settings. Defaults to `PipelineConfig()`.
            - `workers` `(Optional[int], optional)`: Number of images processed concurrently. Defaults to `config.workers`.
            - `debug` `(bool, optional)`: Enable info logs. Defaults to True.
            - `progress` `(bool, optional)`: Show a tqdm progress bar for batch runs. Defaults to True.
            - `progress_callback` `(Optional[Union[Callable[..., Any], Callable[..., Awaitable[Any]]]], optional)`: Callback for batch progress updates, called as `callback(description, done, total, *progress_args)`. Can be sync or async. Setting this disables tqdm progress.
            - `progress_args` `(tuple, optional)`: Additional arguments for progress_callback. Defaults to ().
            - `progress_interval` `(float, optional)`: Time interval for progress updates in seconds. Defaults to 1.

        #### Examples:
        ```python
        import asyncio
        from techzsky import TechZSky

        async def main():
            sky = TechZSky()
            summary = await sky.train("data/train", out_bank="bank.rdgl")
            result = await sky.detect("data/test/synth_0030.png", summary.bank, out_csv="synth_0030.csv")
            print(result.path.rows[:10])

        asyncio.run(main())
        ```
        """

        self.id = get_random_string(6)
        self.config = config or PipelineConfig()
        self.workers = workers or self.config.workers
        self.debug = debug
        self.logger = Logger(self.id)
        self.progress = progress
        self.progress_callback = progress_callback
        self.progress_args = progress_args
        self.progress_interval = progress_interval
        self.is_callback_async = inspect.iscoroutinefunction(progress_callback)
        self.is_running = False
        self.pipeline_tasks = []
        self.items_done = 0
        self.items_total = 0

        self._log(f"Created TechZ SkylineDetector with ID: {self.id} workers: {self.workers}")

    # ------------------------------------------------------------------ public

    async def train(self, dataset_dir: PathLike, out_bank: Optional[PathLike] = None) -> TrainingSummary:
        """
        Learns a filter bank from an image / ground-truth directory.

        #### Args

        - `dataset_dir` `(Union[str, Path])`: Directory holding `<stem>.png` + `<stem>.csv` pairs.
        - `out_bank` `(Optional[Union[str, Path]])`: Where to write the bank file. Not written if omitted.

        #### Returns

        - `TrainingSummary`: The solved bank with per-bucket sample counts.
        """
        with self._running():
            return await self._train(dataset_dir, out_bank)

    async def detect(
        self,
        image_path: PathLike,
        bank: Union[FilterBank, PathLike],
        out_csv: Optional[PathLike] = None,
        overlay: Optional[PathLike] = None,
    ) -> DetectionResult:
        """
        Detects the skyline of one image with the proposed cost.

        #### Args

        - `image_path` `(Union[str, Path])`: 8-bit PNG/PPM image.
        - `bank` `(Union[FilterBank, str, Path])`: Filter bank or bank file path.
        - `out_csv` `(Optional[Union[str, Path]])`: Path CSV in ground-truth format.
        - `overlay` `(Optional[Union[str, Path]])`: PNG with the path drawn in red.
        """
        with self._running():
            bank = await self._load_bank(bank)
            image = await self._load_image(image_path)
            result = await asyncio.to_thread(self._detect_image, image, bank)
            await self._write_outputs(image, result, out_csv, overlay)
            return result

    async def detect_dir(
        self,
        image_dir: PathLike,
        bank: Union[FilterBank, PathLike],
        out_dir: Optional[PathLike] = None,
        overlays: bool = False,
    ) -> Dict[str, DetectionResult]:
        """
        Detects skylines for every image of a directory using the worker pool.

        Writes `<stem>.csv` (and `<stem>_overlay.png` with `overlays`) to `out_dir` when given.
        """
        with self._running():
            bank = await self._load_bank(bank)
            return await self._run_directory(
                "Detecting", image_dir, lambda image: self._detect_image(image, bank), out_dir, overlays
            )

    async def baseline(
        self,
        method: str,
        image_path: PathLike,
        out_csv: Optional[PathLike] = None,
        overlay: Optional[PathLike] = None,
    ) -> DetectionResult:
        """
        Detects the skyline of one image with a non-learning baseline cost.

        #### Args

        - `method` `(str)`: `"edges"` (edge map only) or `"gradient"` (gradient magnitude cost).
        """
        self._check_method(method)
        with self._running():
            image = await self._load_image(image_path)
            result = await asyncio.to_thread(self._baseline_image, method, image)
            await self._write_outputs(image, result, out_csv, overlay)
            return result

    async def baseline_dir(
        self,
        method: str,
        image_dir: PathLike,
        out_dir: Optional[PathLike] = None,
        overlays: bool = False,
    ) -> Dict[str, DetectionResult]:
        self._check_method(method)
        with self._running():
            return await self._run_directory(
                f"Baseline ({method})",
                image_dir,
                lambda image: self._baseline_image(method, image),
                out_dir,
                overlays,
            )

    async def evaluate(
        self, pred_dir: PathLike, gt_dir: PathLike, out_json: Optional[PathLike] = None
    ) -> EvalReport:
        """
        Scores predicted skyline CSVs against ground-truth CSVs with the same stem.

        Segmentation accuracy is added for images found next to the ground truth.
        """
        pred_dir, gt_dir = as_path(pred_dir), as_path(gt_dir)
        pairs, _ = pair_by_stem(pred_dir.glob("*.csv"), gt_dir.glob("*.csv"))
        if not pairs:
            raise NoMatchedPairs(f"no prediction in {pred_dir} matches a ground truth in {gt_dir}")

        heights = {p.stem: p for p in list_images(gt_dir)}
        errors: Dict[str, float] = {}
        segmentation: Dict[str, float] = {}
        for pred_path, gt_path in pairs:
            pred = read_ground_truth(pred_path)
            truth = read_ground_truth(gt_path)
            if pred_path.stem in heights:
                image = await self._load_image(heights[pred_path.stem])
                pred.validate(image.width, image.height, str(pred_path))
                truth.validate(image.width, image.height, str(gt_path))
                segmentation[pred_path.stem] = segmentation_accuracy(pred, truth, image.height)
            elif min(pred.rows + truth.rows, default=0) < 0:
                raise MalformedGroundTruth(f"{pred_path}: skyline rows must not be negative")
            errors[pred_path.stem] = average_absolute_error(pred, truth)

        report = aggregate(errors, self.config.eval, segmentation or None)
        self._log(f"Evaluated {len(errors)} image(s): mean A_err {report.mean:.4f} px")
        if out_json:
            await self._write_text(as_path(out_json), report.to_json())
        return report

    async def synth(
        self, count: int, size: int, seed: int, out_dir: PathLike, split: Optional[int] = None
    ) -> SynthSummary:
        """Generates a synthetic dataset of `count` square scenes of `size` pixels."""
        summary = await asyncio.to_thread(synth_generate, count, size, size, seed, out_dir, split)
        self._log(f"Synthetic dataset written to {summary.out_dir} ({summary.count} images)")
        return summary

    async def sweep(
        self,
        train_dir: PathLike,
        test_dir: PathLike,
        sides: Sequence[int] = (7, 9, 11),
    ) -> Dict[int, EvalReport]:
        """
        Trains and evaluates one bank per filter side on the same split.

        #### Returns

        - `Dict[int, EvalReport]`: Report of the proposed detector for each side.
        """
        truths = {item.name: item.truth for item in await asyncio.to_thread(load_dataset, test_dir)}
        reports: Dict[int, EvalReport] = {}
        for side in sides:
            config = self.config.with_overrides({"blade.side": side})
            runner = TechZSky(
                config,
                workers=self.workers,
                debug=self.debug,
                progress=self.progress,
                progress_callback=self.progress_callback,
                progress_args=self.progress_args,
                progress_interval=self.progress_interval,
            )
            summary = await runner.train(train_dir)
            results = await runner.detect_dir(test_dir, summary.bank)
            errors = {
                name: average_absolute_error(result.path, truths[name])
                for name, result in results.items()
                if name in truths
            }
            reports[side] = aggregate(errors, self.config.eval)
            self._log(f"Filter side {side}: mean A_err {reports[side].mean:.4f} px")
        return reports

    # ---------------------------------------------------------------- pipeline

    def _detect_image(self, image: RgbImage, bank: FilterBank) -> DetectionResult:
        cfg = self.config
        timer = StageTimer()
        start = time.perf_counter()

        with timer.stage("edges"):
            gray = to_grayscale(image)
            edges = canny_with(gray, cfg.canny)
        with timer.stage("tensor"):
            tensor = TensorConfig(bank.tensor_window, cfg.tensor.weight_sigma, bank.quantizer)
            context = PixelContext.build(image, tensor, gray)
        with timer.stage("predict"):
            scores = predict(bank, image, edges, normalization=cfg.blade.normalization, context=context)
        with timer.stage("dp"):
            strength = normalize01(context.features.strength)
            grid = cost_proposed(scores, strength, edges, cfg.dp.v)
            path, total, grid = self._solve(grid)

        wall = (time.perf_counter() - start) * 1000.0
        return DetectionResult(path, path_costs(grid, path), total, timer.timings, wall)

    def _baseline_image(self, method: str, image: RgbImage) -> DetectionResult:
        cfg = self.config
        timer = StageTimer()
        start = time.perf_counter()

        with timer.stage("edges"):
            gray = to_grayscale(image)
            edges = canny_with(gray, cfg.canny) if method == "edges" else None
        with timer.stage("cost"):
            if method == "edges":
                grid = cost_edges_only(edges, cfg.dp.l)
            else:
                grid = cost_gradient(gray, cfg.dp.w1)
        with timer.stage("dp"):
            path, total, grid = self._solve(grid)

        wall = (time.perf_counter() - start) * 1000.0
        return DetectionResult(path, path_costs(grid, path), total, timer.timings, wall)

    def _solve(self, grid: CostGrid) -> Tuple[SkylinePath, float, CostGrid]:
        params = self.config.dp.params
        if self.config.dp.gap_fill:
            grid = gap_fill(grid, params)
        path, total = shortest_path(grid, params)
        return path, total, grid

    async def _train(self, dataset_dir: PathLike, out_bank: Optional[PathLike]) -> TrainingSummary:
        cfg = self.config
        dataset = await asyncio.to_thread(load_dataset, dataset_dir)
        if len(dataset) == 0:
            raise NoTrainingPairs(f"no image / ground-truth pairs found in {dataset_dir}")
        self._log(f"Collecting samples from {len(dataset)} image(s)")

        def collect(index: int) -> SampleBatch:
            item = dataset[index]
            return collect_sample_batch(
                item.image,
                item.truth.rows,
                cfg.canny,
                cfg.tensor,
                cfg.blade.side,
                rng_seed=[cfg.seed, index],
                exclusion_margin=cfg.blade.exclusion_margin,
                positive_target=cfg.blade.positive_target,
                negative_target=cfg.blade.negative_target,
            )

        batches = await self._run_batch("Collecting samples", list(range(len(dataset))), collect)

        # one accumulator per worker, images assigned round-robin, merged in shard order
        shard_count = max(1, min(self.workers, len(batches)))

        def accumulate_shard(shard: int) -> GramAccumulator:
            acc = GramAccumulator(cfg.blade.side, cfg.quantizer)
            for batch in batches[shard::shard_count]:
                acc.add_batch(batch)
            return acc

        shards = await self._run_batch("Accumulating", list(range(shard_count)), accumulate_shard)
        acc = shards[0]
        for shard in shards[1:]:
            acc = merge(acc, shard)

        self._log("Solving filter bank")
        bank = await asyncio.to_thread(
            solve_bank,
            acc,
            cfg.blade.regularizer,
            cfg.blade.effective_min_samples,
            cfg.tensor.window,
        )
        summary = TrainingSummary(
            bank=bank,
            bucket_counts=[int(c) for c in acc.counts],
            samples=int(acc.counts.sum()),
            images=len(dataset),
        )
        if out_bank:
            summary.bank_path = as_path(out_bank)
            await self._write_bytes(summary.bank_path, bank.to_bytes())
            self._log(f"Filter bank written to {summary.bank_path}")
        self._log(
            f"Trained {bank.trained_count}/{bank.bucket_count} buckets from {summary.samples} samples"
        )
        return summary

    async def _run_directory(
        self,
        description: str,
        image_dir: PathLike,
        work: Callable[[RgbImage], DetectionResult],
        out_dir: Optional[PathLike],
        overlays: bool,
    ) -> Dict[str, DetectionResult]:
        image_dir = as_path(image_dir)
        if not image_dir.is_dir():
            raise MissingDirectory(f"image directory {image_dir} does not exist")
        paths = list_images(image_dir)
        out_dir = as_path(out_dir) if out_dir else None

        async def one(path: Path) -> DetectionResult:
            image = await self._load_image(path)
            result = await asyncio.to_thread(work, image)
            if out_dir:
                await self._write_outputs(
                    image,
                    result,
                    out_dir / f"{path.stem}.csv",
                    out_dir / f"{path.stem}_overlay.png" if overlays else None,
                )
            return result

        results = await self._run_batch(description, paths, one)
        return {path.stem: result for path, result in zip(paths, results)}

    # ------------------------------------------------------------- async plumbing

    @contextmanager
    def _running(self) -> Iterator[None]:
        if self.is_running:
            raise PipelineBusy("Pipeline is already running on this object")
        self.is_running = True
        try:
            yield
        finally:
            self.is_running = False

    def _log(self, message: str, level: str = "info") -> None:
        """
        Log a message with the specified level.

        Args:
            message (str): Message to log.
            level (str): Log level ('info', 'warning', 'error'). Defaults to 'info'.
        """

        if level == "warning":
            self.logger.warning(message)
        elif level == "error":
            self.logger.error(message)
        elif self.debug:
            self.logger.info(message)

    def _check_method(self, method: str) -> None:
        if method not in BASELINE_METHODS:
            raise UnknownMethod(f"unknown baseline method {method!r}, expected one of {BASELINE_METHODS}")

    async def _run_batch(self, description: str, items: Sequence[Any], work: Callable[[Any], Any]) -> List[Any]:
        """
        Run `work` over `items` with at most `self.workers` in flight.

        `work` may be a coroutine function or a blocking function (run on a thread).
        Results keep the order of `items`.
        """
        results: List[Any] = [None] * len(items)
        semaphore = asyncio.Semaphore(self.workers)
        self.items_done = 0
        self.items_total = len(items)

        async def runner(index: int, item: Any) -> None:
            async with semaphore:
                if inspect.iscoroutinefunction(work):
                    results[index] = await work(item)
                else:
                    results[index] = await asyncio.to_thread(work, item)
                self.items_done += 1

        tasks = [runner(i, item) for i, item in enumerate(items)]
        tasks.append(self._show_progress(description))
        await self._task_runner(tasks)
        return results

    async def _task_runner(self, tasks: List[Awaitable]) -> None:
        """
        Run a list of async tasks concurrently, handling exceptions and cancellations.

        Args:
            tasks (List[Awaitable]): List of async tasks to run.
        """

        try:
            new_tasks = [asyncio.create_task(task) for task in tasks]
            tasks = new_tasks
            for task in tasks:
                self.pipeline_tasks.append(task)

            done, pending = await asyncio.wait(
                tasks, return_when=asyncio.FIRST_EXCEPTION
            )
            for task in tasks:
                self.pipeline_tasks.remove(task)

            for task in done:
                if task.exception():
                    for pending_task in pending:
                        pending_task.cancel()
                    await asyncio.gather(*pending, return_exceptions=True)
                    raise task.exception()
        except Exception as e:
            self._log(
                f"Exception raised in task runner: {e}",
                level="error",
            )
            raise e

    async def _show_progress(self, description: str) -> None:
        """
        Show batch progress either via a callback or tqdm progress bar.

        Args:
            description (str): Description for the progress display.
        """
        previous_done = 0

        if self.progress_callback:
            while self.items_done < self.items_total:
                if self.items_done != previous_done:
                    await self._call_progress(description, self.items_done)
                    previous_done = self.items_done

                await asyncio.sleep(self.progress_interval)

            await self._call_progress(description, self.items_total)
        else:
            if self.progress:
                with tqdm(
                    total=self.items_total,
                    unit="img",
                    desc=description,
                    bar_format="{desc}: {percentage:3.0f}% |{bar}| {n_fmt}/{total_fmt} [{elapsed}<{remaining}, {rate_fmt}{postfix}]",
                ) as pbar:
                    while self.items_done < self.items_total:
                        if self.items_done != previous_done:
                            pbar.update(self.items_done - previous_done)
                            previous_done = self.items_done

                        await asyncio.sleep(self.progress_interval)
                    pbar.update(self.items_total - previous_done)

    async def _call_progress(self, description: str, done: int) -> None:
        if self.is_callback_async:
            await self.progress_callback(description, done, self.items_total, *self.progress_args)
        else:
            self.progress_callback(description, done, self.items_total, *self.progress_args)

    # ------------------------------------------------------------------- file io

    async def _load_bank(self, bank: Union[FilterBank, PathLike]) -> FilterBank:
        if isinstance(bank, FilterBank):
            loaded = bank
        else:
            async with aiofiles.open(as_path(bank), "rb") as file:
                loaded = FilterBank.from_bytes(await file.read())
            self._log(f"Loaded filter bank {bank} ({loaded.trained_count}/{loaded.bucket_count} trained)")
        if loaded.tensor_window != self.config.tensor.window:
            self._log(
                f"Bank was trained with tensor window {loaded.tensor_window}, "
                f"config says {self.config.tensor.window}; using the bank's",
                level="warning",
            )
        return loaded

    async def _load_image(self, path: PathLike) -> RgbImage:
        async with aiofiles.open(as_path(path), "rb") as file:
            payload = await file.read()
        return decode_image(payload)

    async def _write_outputs(
        self,
        image: RgbImage,
        result: DetectionResult,
        out_csv: Optional[PathLike],
        overlay: Optional[PathLike],
    ) -> None:
        if out_csv:
            await self._write_text(as_path(out_csv), result.truth.to_csv())
        if overlay:
            pixels = overlay_rows(image, result.path.rows)
            await self._write_bytes(as_path(overlay), encode_png(pixels))

    async def _write_bytes(self, path: Path, payload: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, "wb") as file:
            await file.write(payload)

    async def _write_text(self, path: Path, text: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(path, "w") as file:
            await file.write(text)


__all__ = [
    "TechZSky",
    "DetectionResult",
    "TrainingSummary",
    "PipelineConfig",
    "FilterBank",
    "EvalReport",
    "BASELINE_METHODS",
]
