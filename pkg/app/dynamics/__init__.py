# dynamics module
