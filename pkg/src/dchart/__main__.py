"""Module entry point so ``python -m dchart`` behaves like the installed script."""

from .cli import main

if __name__ == "__main__":
    raise SystemExit(main())
