from .settings import __version__  # noqa: F401


def _config_logging(config=None, *args, **kwargs):
    import logging
    from logging.config import dictConfig

    from .logger import make_logging_config

    if config:
        kwargs = {
            'level': config.log_level,
            'colored': True,
            **kwargs,
        }
        if config.log_file:
            kwargs['logfile'] = config.log_file
        if kwargs['level'] <= logging.DEBUG:
            kwargs.setdefault('style', 'debug')
        dictConfig(make_logging_config('stochflow', *args, **kwargs))
        return

    dictConfig(make_logging_config('stochflow', *args, **kwargs))
