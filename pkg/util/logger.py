import functools
import logging
import os
import sys

from termcolor import colored

_LEVEL_COLORS = {logging.WARNING: ("yellow", []), logging.ERROR: ("red", ["bold"]),
                 logging.CRITICAL: ("red", ["bold", "underline"])}


class _ColorfulFormatter(logging.Formatter):
    def formatMessage(self, record):
        log = super(_ColorfulFormatter, self).formatMessage(record)
        if record.levelno not in _LEVEL_COLORS:
            return log
        color, attrs = _LEVEL_COLORS[record.levelno]
        return colored(record.levelname, color, attrs=attrs) + " " + log


def _level(level):
    if level is not None:
        return level
    name = os.environ.get("DSE_LOG_LEVEL", "INFO").upper()
    return getattr(logging, name, logging.INFO)


def get_logger(output=None, color=None, name="dse", level=None):
    """
    The shared "dse" logger. Progress goes to stderr; stdout is reserved for the
    CLI's JSON results.

    Args:
        output (str): a ".txt"/".log" file, or a directory receiving `log.txt`.
            Files are appended to and opened once per process.
        color (bool): colour the console; defaults to whether stderr is a terminal.
        level: logging level, defaulting to $DSE_LOG_LEVEL or INFO.
    """
    logger = logging.getLogger(name)
    level = _level(level)
    logger.propagate = False

    # library modules call get_logger() while run.py adds a file; one console handler only
    for h in list(logger.handlers):
        if h.get_name() == "console":
            logger.removeHandler(h)
    if color is None:
        color = hasattr(sys.stderr, "isatty") and sys.stderr.isatty()
    ch = logging.StreamHandler(stream=sys.stderr)
    ch.set_name("console")
    ch.setLevel(level)
    if color:
        ch.setFormatter(_ColorfulFormatter(colored("[%(asctime)s %(name)s]: ", "green") + "%(message)s",
                                           datefmt="%m/%d %H:%M:%S"))
    else:
        ch.setFormatter(logging.Formatter("[%(asctime)s %(name)s] %(levelname)s: %(message)s",
                                          datefmt="%m/%d %H:%M:%S"))
    logger.addHandler(ch)

    if output is not None:
        filename = output if output.endswith((".txt", ".log")) else os.path.join(output, "log.txt")
        filename = os.path.abspath(filename)
        if not any(h.get_name() == "file:" + filename for h in logger.handlers):
            os.makedirs(os.path.dirname(filename), exist_ok=True)
            fh = logging.StreamHandler(_cached_log_stream(filename))
            fh.set_name("file:" + filename)
            fh.setLevel(logging.DEBUG)
            fh.setFormatter(logging.Formatter("[%(asctime)s] %(name)s %(levelname)s: %(message)s",
                                              datefmt="%m/%d %H:%M:%S"))
            logger.addHandler(fh)

    has_file = any((h.get_name() or "").startswith("file:") for h in logger.handlers)
    logger.setLevel(logging.DEBUG if has_file else level)
    return logger


# different calls with the same file name share one open stream
@functools.lru_cache(maxsize=None)
def _cached_log_stream(filename):
    return open(filename, "a")
