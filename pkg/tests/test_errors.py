import logging

from sweeping_control import errors, log_config


def test_error_carries_message_and_details():
    ex = errors.NotInCone("off the cone", residual=0.5, interval=3)
    assert ex.message == "off the cone"
    assert ex.residual == 0.5
    assert ex.details['interval'] == 3
    assert ex.what() == "Sweeping Error [NotInCone]: off the cone"
    assert str(ex) == ex.what()


def test_input_errors_are_the_usage_family():
    assert issubclass(errors.ConfigError, errors.INPUT_ERRORS)
    assert not issubclass(errors.NumericalFailure, errors.INPUT_ERRORS)
    assert errors.ConfigError("bad", key='T').key == 'T'


def test_trace_file_receives_trace_records(tmp_path):
    log_config.load_config({'results_dir': str(tmp_path), 'trace_file': True})
    try:
        logging.getLogger('sweeping_control.geometry').trace("[TEST] trace record")
        for handler in logging.getLogger('sweeping_control').handlers:
            handler.flush()
        assert "[TEST] trace record" in (tmp_path / 'trace.log').read_text(encoding='utf-8')
    finally:
        log_config.load_config()
