import os

from setuptools import find_packages, setup

import ntlchange


def read(fname):
    return open(os.path.join(os.path.dirname(__file__), fname)).read()


install_requires = [
    'django>=3.1',
    'numpy>=1.22',
    'pandas>=1.3',
    'scipy>=1.7',
]

setup(
    name='django-ntlchange',
    version=ntlchange.__version__,
    description="Change detection and characterization in daily urban "
                "nighttime-light series with an ensemble of neural forecasters",
    long_description_content_type="text/x-rst",
    long_description=read('README.rst'),
    classifiers=[
        # Get strings from http://pypi.python.org/pypi?%3Aaction=list_classifiers
        'Development Status :: 4 - Beta',
        'Framework :: Django',
        'Framework :: Django :: 3.2',
        'Framework :: Django :: 4',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Operating System :: OS Independent',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3 :: Only',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Topic :: Scientific/Engineering :: GIS',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
    ],
    keywords='nighttime lights change detection time series forecasting '
             'ensemble LSTM CNN remote sensing',
    license='MIT',
    packages=find_packages(exclude=['tests', 'demo']),
    include_package_data=True,
    zip_safe=False,
    python_requires='>=3.8',
    install_requires=install_requires,
    entry_points="""
        # -*- Entry points: -*-
        [console_scripts]
        ntlchange=ntlchange.cli:main
    """,
)
