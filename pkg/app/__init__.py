# app module
