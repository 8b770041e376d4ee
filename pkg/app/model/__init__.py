# model module
