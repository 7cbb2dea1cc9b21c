from . import config_base
import coloredlogs

coloredlogs.install(level=config_base.log_level, milliseconds=True, isatty=True)


def set_level(level):
    coloredlogs.set_level(level)
