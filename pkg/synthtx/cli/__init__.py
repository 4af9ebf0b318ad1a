from synthtx.cli.app import App, main
