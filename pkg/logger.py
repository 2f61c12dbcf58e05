import logging

# Global logger configuration
_global_logger = None

# fallback when no global logger is connected
_module_logger = logging.getLogger("hypermeso")


def set_global_logger(logger):
    """
    Set a global logger to redirect library messages

    Args:
        logger (callable | logging.Logger | None): A function that takes a level
            and a string, a standard logger, or None to restore the default
    """
    global _global_logger
    _global_logger = logger


def log_message(level, the_message):
    """
    Log a message using the global logger or the hypermeso logger if none is set

    Args:
        level (int): Logging level (e.g., logging.INFO)
        the_message (str): Message to log
    """
    message = str(the_message).rstrip("\r\n")
    if _global_logger:
        if isinstance(_global_logger, logging.Logger):
            _global_logger.log(level, message)
        else:
            # callables such as a Qt signal emitter get both level and message
            _global_logger(level, message)
    else:
        _module_logger.log(level, message)
