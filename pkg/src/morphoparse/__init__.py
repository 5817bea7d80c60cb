"""Joint content-word identification, projective dependency parsing, and
morphosyntactic feature prediction over content/function CoNLL-U."""

__version__ = "0.1.0"
