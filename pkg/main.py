import sys

from app.logging_config import configure_logging
from app.api.cli import main


def run() -> int:
    configure_logging()
    return main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(run())
