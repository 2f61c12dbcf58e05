import logging

from logger import log_message, set_global_logger


def test_callable_receives_level_and_message():
    messages = []
    set_global_logger(lambda level, message: messages.append((level, message)))
    log_message(logging.WARNING, "dropped 3 lines\n")
    assert messages == [(logging.WARNING, "dropped 3 lines")]


def test_standard_logger(caplog):
    caplog.set_level(logging.INFO)
    set_global_logger(logging.getLogger("hypermeso.test"))
    log_message(logging.INFO, "fitting")
    assert [(r.name, r.message) for r in caplog.records] == [("hypermeso.test", "fitting")]


def test_default_is_module_logger(caplog):
    caplog.set_level(logging.DEBUG)
    log_message(logging.DEBUG, "restart 0")
    assert caplog.records[-1].name == "hypermeso"
    assert caplog.records[-1].message == "restart 0"
