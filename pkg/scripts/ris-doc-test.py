#!/usr/bin/python
# -*- coding: utf-8 -*-
#
# This file is part of ris-statdesign
#
# ris-statdesign is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# ris-statdesign is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with ris-statdesign.  If not, see <http://www.gnu.org/licenses/>.
#
# Checks that the CLI documentation parses and matches its argument spec,
# and renders it as plain text.

import argparse
import importlib
import os
import re
import sys
import textwrap
import traceback

import yaml

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

_ITALIC = re.compile(r"I\(([^)]+)\)")
_BOLD = re.compile(r"B\(([^)]+)\)")
_URL = re.compile(r"U\(([^)]+)\)")
_CONST = re.compile(r"C\(([^)]+)\)")


def tty_ify(text):
    t = _ITALIC.sub("`" + r"\1" + "'", text)
    t = _BOLD.sub("*" + r"\1" + "*", t)
    t = _URL.sub(r"\1", t)
    t = _CONST.sub("`" + r"\1" + "'", t)
    return t


def get_man_text(doc):
    opt_indent = "        "
    text = []
    text.append("> %s\n" % doc['program'].upper())
    desc = " ".join(doc['description'])
    text.append("%s\n" % textwrap.fill(tty_ify(desc), initial_indent="  ", subsequent_indent="  "))

    if doc.get('options'):
        text.append("Options (= is mandatory):\n")
    for o in sorted(doc.get('options') or {}):
        opt = doc['options'][o]
        opt_leadin = "=" if opt.get('required', False) else "-"
        text.append("%s %s" % (opt_leadin, o))
        desc = " ".join(opt['description'])
        if 'choices' in opt:
            desc = desc + " (Choices: " + ", ".join(str(i) for i in opt['choices']) + ")"
        if 'default' in opt:
            desc = desc + " [Default: " + str(opt['default']) + "]"
        text.append("%s\n" % textwrap.fill(tty_ify(desc), initial_indent=opt_indent,
                                           subsequent_indent=opt_indent))

    if doc.get('notes'):
        notes = " ".join(doc['notes'])
        text.append("Notes:%s\n" % textwrap.fill(tty_ify(notes), initial_indent="  ",
                                                 subsequent_indent=opt_indent))
    if doc.get('requirements'):
        req = ", ".join(doc['requirements'])
        text.append("Requirements:%s\n" % textwrap.fill(tty_ify(req), initial_indent="  ",
                                                        subsequent_indent=opt_indent))
    if doc.get('plainexamples'):
        text.append("EXAMPLES:")
        text.append(doc['plainexamples'])
    if doc.get('returndocs'):
        text.append("RETURN VALUES:")
        text.append(doc['returndocs'])
    text.append('')
    return "\n".join(text)


def doc_errors(module):
    """Problems with the documentation blocks of ``module``."""
    errors = []
    try:
        doc = yaml.safe_load(module.DOCUMENTATION)
        yaml.safe_load(module.RETURN)
    except (AttributeError, yaml.YAMLError) as e:
        return None, ["documentation does not parse: %s" % e]
    if not isinstance(doc, dict) or 'options' not in doc:
        return None, ["documentation has no options"]

    documented = set(doc['options'])
    spec = getattr(module, 'CLI_ARGUMENT_SPEC', {})
    for name in sorted(set(spec) - documented):
        errors.append("option %s is not documented" % name)
    for name in sorted(documented - set(spec)):
        errors.append("documented option %s does not exist" % name)
    for name in sorted(documented & set(spec)):
        opt = doc['options'][name]
        if not opt.get('description'):
            errors.append("option %s has no description" % name)
        choices = spec[name].get('choices')
        if choices and list(opt.get('choices', [])) != list(choices):
            errors.append("option %s documents different choices" % name)
    doc['plainexamples'] = getattr(module, 'EXAMPLES', None)
    doc['returndocs'] = getattr(module, 'RETURN', None)
    return doc, errors


def main(argv=None):
    p = argparse.ArgumentParser(description='Check and show CLI documentation')
    p.add_argument('modules', nargs='*', default=['library.ris_cli'])
    p.add_argument('-q', '--quiet', action='store_true', help='only report errors')
    args = p.parse_args(argv)

    has_error = False
    for name in args.modules:
        try:
            module = importlib.import_module(name)
        except ImportError:
            traceback.print_exc()
            sys.stderr.write("ERROR: module %s could not be imported\n" % name)
            has_error = True
            continue
        doc, errors = doc_errors(module)
        for error in errors:
            sys.stderr.write("ERROR: %s: %s\n" % (name, error))
        has_error = has_error or bool(errors)
        if doc is not None and not args.quiet:
            text = get_man_text(doc)
            try:
                text.encode('ascii')
            except UnicodeEncodeError:
                sys.stderr.write("ERROR: module %s has a documentation encoding error\n" % name)
                has_error = True
            sys.stdout.write(text)
    return 1 if has_error else 0


if __name__ == '__main__':
    sys.exit(main())
