# Command-line subcommands; each module exposes add_parser() and a run() handler
