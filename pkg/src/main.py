import sys

from cli import run


def main():
    """Entry point: python src/main.py <command> ..."""
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
