"""Console and file helpers for the opdomain command-line tool."""
