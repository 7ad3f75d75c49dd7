"""Enable python -m jointcat execution."""

from jointcat.app import app

if __name__ == "__main__":
    app()
