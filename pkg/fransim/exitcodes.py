OK = 0

# failure exit codes:
CONFIG_ERROR = 1
NUMERIC_FAILURE = 2
IO_FAILURE = 3
