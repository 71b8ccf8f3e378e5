import logging
import sys

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def configure_logger(log_filename=None, name="survdisc", level=logging.INFO):
    """
    Returns the shared survdisc logger writing to standard error and, when
    `log_filename` is given, to that file as well.
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Clear any existing handlers (in case of repeated calls)
    if logger.handlers:
        for handler in logger.handlers:
            handler.close()
        logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setLevel(level)
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    if log_filename:
        file_handler = logging.FileHandler(log_filename)
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    # library modules log under their own names; route them to the same handlers
    for module_name in ("core", "cox", "discrim", "smooth", "oracle", "utils"):
        module_logger = logging.getLogger(module_name)
        module_logger.setLevel(level)
        module_logger.handlers = list(logger.handlers)
        module_logger.propagate = False
    return logger


def log_section_header(section_title, logger):
    separator = f"{'=' * 20} {section_title} {'=' * 20}"
    logger.info(f"\n\n{separator}\n")


def log_section_footer(logger):
    separator = f"{'=' * 60}"
    logger.info(f"\n\n{separator}\n")


class NullLogger:
    """A Logger implementation that does not output any logs"""

    def info(self, *args, **kwargs):
        pass

    def error(self, *args, **kwargs):
        pass

    def warning(self, *args, **kwargs):
        pass

    def debug(self, *args, **kwargs):
        pass

