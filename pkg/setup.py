from setuptools import setup, find_packages

from pathlib import Path
this_directory = Path(__file__).parent
long_description = (this_directory / "README.md").read_text()

setup(
    name='exercise-goal-setting',
    python_requires='>3.9.0',
    version='0.1.0',
    license='MIT',
    description="Adaptive exercise goal setting with fitness-fatigue simulation and actor-critic agents",
    readme='README.md',
    long_description=long_description,
    long_description_content_type='text/markdown',
    packages=find_packages('src'),
    include_package_data=True,
    package_dir={'': 'src'},
    keywords='exercise goal setting reinforcement learning actor-critic fitness fatigue',
    install_requires=[
          'pandas',
          'numpy',
          'scipy',
          'gymnasium',
          'tomli; python_version < "3.11"'
      ],
    extras_require={
          'tests': ['pytest', 'hypothesis'],
          'plots': ['matplotlib'],
      },
    entry_points={
          'console_scripts': [
              'exercise-goal-setting=exercise_goal_setting.cli:main',
          ],
      },

)
