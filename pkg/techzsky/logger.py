import logging
from typing import Dict

PREFIX = "TechZSky"

# every Logger created, keyed by its full name
_registry: Dict[str, "Logger"] = {}


class Logger:
    """
    Console logger named "TechZSky - <component>".

    A component is a run id for TechZSky objects or a module name for library code.
    """

    def __init__(self, component: str, level=logging.DEBUG):
        self.name = f"{PREFIX} - {component}"
        self.logger = logging.getLogger(self.name)
        self.logger.setLevel(level)
        self.formatter = logging.Formatter("%(name)s - %(levelname)s - %(message)s")

        # StreamHandler for console output, attached once per logger name
        if not self.logger.handlers:
            self.stream_handler = logging.StreamHandler()
            self.stream_handler.setFormatter(self.formatter)
            self.logger.addHandler(self.stream_handler)
        _registry[self.name] = self

    def debug(self, message):
        self.logger.debug(message)

    def info(self, message):
        self.logger.info(message)

    def warning(self, message):
        self.logger.warning(message)

    def error(self, message):
        self.logger.error(message)

    def set_level(self, level):
        self.logger.setLevel(level)


def set_library_level(level) -> None:
    """Set the level of every TechZSky logger created so far, e.g. WARNING for quiet runs."""
    for logger in _registry.values():
        logger.set_level(level)
