"""Paths to data files shipped with the package."""

from importlib.resources import files


def toy_corpus_path() -> str:
    """50-sentence synthetic corpus in the content/function annotation style,
    small enough to overfit on one CPU core in seconds."""
    return str(files("morphoparse").joinpath("resources/toy50.conllu"))


def spatial_cases_path() -> str:
    """An example spatial-case inventory for the analysis tools."""
    return str(files("morphoparse").joinpath("resources/spatial_cases.txt"))
