#!/usr/bin/env python3
# coding=utf-8

import importlib

from asyncblink import signal

plugins = []


def plugin_registered_handler(plugin_name):
    if plugin_name not in plugins:
        plugins.append(plugin_name)


signal("plugin-registered").connect(plugin_registered_handler)


def load_plugins(*names):
    for name in names:
        if name not in plugins:
            importlib.import_module(name)
    return list(plugins)
