from mcp.server.fastmcp import FastMCP
from config.settings import SERVER_NAME, HOST, PORT

# The path for the 'streamable-http' transport as per official docs
path = "/mcp"

myserver = FastMCP(
    SERVER_NAME,
    instructions=(
        "Plans and executes knowledge-graph creation from RML mappings over CSV sources: "
        "partitions the mapping assertions, schedules them as a bushy tree with duplicate "
        "removal pushed down, and runs the tree or emits a shell script for an external engine."
    ),
    host=HOST,
    port=PORT,
    streamable_http_path=path,
)
