"""
Logging configuration module

Console output goes through coloredlogs, a rotating ``results.log`` keeps the
run history and an optional ``trace.log`` receives the per-step numerical
trace (projections, NNLS fits, line-search evaluations) that is far too noisy
for the console.
"""
import logging
import tempfile
from logging.config import dictConfig
from pathlib import Path

# Modules whose TRACE output is per projection / per evaluation
NOISY_MODULES = ('sweeping_control.geometry', 'sweeping_control.dynamics')


class Logging:
    def __init__(self, config: dict = None):
        self._config = config or {}

    @property
    def global_log_level(self) -> str:
        return self._config.get('log_level_global', 'INFO')

    @property
    def file_log_level(self) -> str:
        return self._config.get('log_level_file', self.global_log_level)

    @property
    def console_log_level(self) -> str:
        return self._config.get('log_level_console', self.global_log_level)

    @property
    def trace_enabled(self) -> bool:
        return bool(self._config.get('trace_file', False))

    @property
    def handlers(self) -> dict:
        handlers = {
            'console': self.get_handler_console(),
            'results_file': self.get_logger_file('results'),
        }
        if self.trace_enabled:
            handlers['trace_file'] = self.get_logger_file('trace', level='TRACE')
        return handlers

    @property
    def formatters(self) -> dict:
        return {
            'verbose': {'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s'},
            'colored_console': {
                '()': 'coloredlogs.ColoredFormatter',
                'format': "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                'datefmt': '%H:%M:%S'
            },
        }

    @property
    def loggers(self) -> dict:
        package_handlers = ['console', 'results_file']
        if self.trace_enabled:
            package_handlers.append('trace_file')
        loggers = {
            'sweeping_control': {
                'handlers': package_handlers,
                'level': 'TRACE' if self.trace_enabled else self.global_log_level,
                'propagate': False,
            },
            'tests': {'handlers': ['console'], 'level': 'DEBUG', 'propagate': True},
        }
        if not self.trace_enabled:
            # inner loops stay quiet unless a trace file was asked for
            for name in NOISY_MODULES:
                loggers[name] = {'level': 'INFO', 'propagate': True}
        return loggers

    @property
    def logger_config(self) -> dict:
        return {
            'version': 1,
            'disable_existing_loggers': False,
            'formatters': self.formatters,
            'handlers': self.handlers,
            'loggers': self.loggers,
        }

    @property
    def results_dir(self) -> Path:
        return Path(self._config.get('results_dir', tempfile.gettempdir()))

    def get_logger_file(self, name: str, level: str = None) -> dict:
        level = level or self.file_log_level
        results_dir = self.results_dir
        if not results_dir.exists():
            results_dir.mkdir(parents=True)
        return {
            'level': level,
            'class': 'logging.handlers.RotatingFileHandler',
            'formatter': 'verbose',
            'filename': str(results_dir / f'{name}.log'),
            'maxBytes': 5000000,  # 5MB
            'backupCount': 5
        }

    def get_handler_console(self, level: str = None) -> dict:
        level = level or self.console_log_level
        return {
            'level': level, 'class': 'logging.StreamHandler', 'formatter': 'colored_console'
        }

    def load_config(self):
        """Registers the trace level and applies the dict config"""
        add_custom_log_level()
        dictConfig(self.logger_config)


TRACE_LOG_LVL = 9


def _trace(self, message, *args, **kws):
    if self.isEnabledFor(TRACE_LOG_LVL):
        self._log(TRACE_LOG_LVL, message, args, **kws)


def add_custom_log_level():
    logging.addLevelName(TRACE_LOG_LVL, 'TRACE')
    logging.Logger.trace = _trace


def load_config(config: dict = None):
    """Loads the logging config
    Args:
        config(dict): optional mapping with ``log_level_global``, ``log_level_file``,
            ``log_level_console``, ``results_dir`` and ``trace_file``
    """
    return Logging(config=config).load_config()
