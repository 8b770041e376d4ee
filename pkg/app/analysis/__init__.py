# analysis module
