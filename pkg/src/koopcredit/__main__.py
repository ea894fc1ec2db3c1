"""Allow running the CLI as `python -m koopcredit`."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
