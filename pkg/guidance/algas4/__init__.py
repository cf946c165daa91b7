"""ALGAS4 four-core landing guidance simulator."""

from .config import RunConfig, parse_config
from .pipeline import run_scenario, verify_accuracy

__all__ = ["RunConfig", "parse_config", "run_scenario", "verify_accuracy"]


def main(argv=None):
    """Run the simulator command line"""
    from .cli import main as cli_main

    return cli_main(argv)


if __name__ == "__main__":
    main()
