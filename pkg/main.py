import sys

from cli.commands import main
from utils.server import myserver
from tools.kg import planning, execution


## for hosting: `uvicorn main:app` (see start.sh)
app = myserver.streamable_http_app()

## for local: `python main.py serve --transport stdio`, or any other subcommand

if __name__ == "__main__":
    sys.exit(main())
