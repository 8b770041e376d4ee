# common module
